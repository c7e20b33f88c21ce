import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import dequantize
import genrand
import oqp
import toffoli
from errors import ParseError, QFormulaError, UsageError
from formula_ir import (
    IRObject,
    TruthTable,
    describe,
    dumps,
    index_to_bits,
    load_document,
    parse_circuit,
    parse_qformula,
    serialize_cformula,
    serialize_program,
    variables,
)
from qlinalg import Channel, DensityMatrix, Tolerances, is_classical_state
from simulate import closeness, evaluate, resolve_threads, separation, truth_table

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s'
)

# Configuration
CONFIG = {
    'eps_num': 1e-9,
    'eps_dedup': 1e-7,
    'eps_classical': 1e-7,
    'delta': 0.1,
    'threads': 0,  # 0 = one worker per CPU
    'max_vars': 6,
    'max_depth': 3,
    'max_arity': 3,
    'seed': 0,
    'progress': False,
}

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = UsageError.exit_code


def configure_logging(verbose: bool = False, log_file: Optional[str] = None) -> None:
    """Raise verbosity and/or mirror the log into a file."""
    root = logging.getLogger()
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    if log_file:
        handler = logging.FileHandler(log_file, mode='w')
        handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(levelname)s - %(message)s - %(filename)s:%(lineno)d'
        ))
        root.addHandler(handler)
    logging.captureWarnings(True)


def format_state(state: DensityMatrix, tol: Tolerances) -> str:
    bit = is_classical_state(state, tol)
    if bit is not None:
        return f"|{bit}⟩⟨{bit}| (classical {bit})"
    return f"non-classical, P(1) = {state.prob_one:.12f}, purity = {state.purity:.12f}"


def parse_bits(text: str) -> List[int]:
    text = text.strip()
    if not text or set(text) - {"0", "1"}:
        raise UsageError(f"'{text}' is not a bit string")
    return [int(c) for c in text]


class FormulaManager:
    """Runs the toolkit's commands and renders their reports."""

    def __init__(self, tol: Tolerances, threads: int, json_output: bool = False, progress: bool = False):
        self.tol = tol
        self.threads = threads
        self.json_output = json_output
        self.progress = progress

    # Reporting

    def report(self, title: str, summary: Dict, lines: Sequence[str] = ()) -> None:
        if self.json_output:
            print(json.dumps(summary, indent=2, ensure_ascii=False))
            return
        print(f"\n=== {title} ===")
        for line in lines:
            print(line)

    @staticmethod
    def read(path: str) -> str:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return f.read()
        except OSError as e:
            raise UsageError(f"cannot read {path}: {e.strerror}") from e

    @staticmethod
    def write(path: str, text: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text + "\n")
        logging.info(f"wrote {path}")

    def load(self, path: str) -> IRObject:
        return load_document(self.read(path), self.tol)

    # Commands

    def simulate(self, path: str, x: Optional[str], all_inputs: bool, csv_path: Optional[str]) -> int:
        f = self.load(path)
        if all_inputs:
            result = truth_table(f, self.tol, self.threads, progress=self.progress)
            frame = result.to_frame()
            if csv_path:
                frame.to_csv(csv_path, index=False)
                logging.info(f"truth table written to {csv_path}")
            summary = {
                "kind": describe(f),
                "vars": list(result.vars),
                "table": result.table.to_string(),
                "classical": result.classical,
            }
            lines = [f"Kind: {describe(f)}", f"Classical: {result.classical}", frame.to_string(index=False)]
            if result.outputs is not None and not result.classical:
                summary["separation"] = separation(result.outputs, result.table.bits, self.tol)
                summary["closeness"] = closeness(result.outputs, result.table.bits, self.tol)
                lines.append(f"Separation: {summary['separation']:.12f}")
                lines.append(f"Closeness: {summary['closeness']:.12f}")
            self.report("Truth Table", summary, lines)
            return EXIT_OK

        if x is None:
            raise UsageError("simulate needs --x BITS or --all")
        value = evaluate(f, parse_bits(x))
        if isinstance(value, DensityMatrix):
            text = format_state(value, self.tol)
            summary = {"kind": describe(f), "output": text, "p1": value.prob_one}
        else:
            text = str(value)
            summary = {"kind": describe(f), "output": value}
        self.report("Simulation", summary, [f"output: {text}"])
        return EXIT_OK

    def dequantize(self, path: str, delta: Optional[float], out: Optional[str],
                   certificates: Optional[str], max_arity: int) -> int:
        f = parse_qformula(self.read(path), self.tol)
        if delta is None:
            result = dequantize.dequantize_exact(f, self.tol, max_arity)
        else:
            result = dequantize.dequantize_bounded(f, dequantize.ErrorBudget(delta), self.tol, max_arity)

        if out:
            self.write(out, serialize_cformula(result.cformula))
        if certificates:
            self.write(certificates, dequantize.serialize_output(result))
        summary = {
            "mode": "exact" if delta is None else "bounded",
            "delta": delta,
            "size": result.size,
            "depth": result.depth,
            "certificates": len(result.certificates),
        }
        self.report("Dequantization", summary, [
            f"Mode: {summary['mode']}" + ("" if delta is None else f" (delta={delta})"),
            f"size={result.size} depth={result.depth}",
            f"Certificates: {len(result.certificates)} (all verified)",
        ] + ([f"Classical formula: {out}"] if out else []))
        return EXIT_OK

    def compile_oqp(self, path: str, out: Optional[str]) -> int:
        circuit = parse_circuit(self.read(path))
        report = oqp.compile(circuit)
        verified = oqp.verify_compilation(circuit, report.program, self.tol)
        if out:
            self.write(out, serialize_program(report.program))
        summary = {**report.to_json(), "verified": verified}
        self.report("One-Qubit Program", summary, [
            f"length={report.length} bound={report.bound} depth={report.source_depth}",
            f"Verified on all inputs: {verified}",
        ])
        return EXIT_OK if verified else EXIT_MISMATCH

    def verify_equiv(self, path_a: str, path_b: str) -> int:
        a, b = self.load(path_a), self.load(path_b)
        vars_ = sorted(set(variables(a)) | set(variables(b)))
        table_a = truth_table(a, self.tol, self.threads, vars_=vars_, progress=self.progress).table
        table_b = truth_table(b, self.tol, self.threads, vars_=vars_, progress=self.progress).table
        mismatch = next((i for i, (p, q) in enumerate(zip(table_a.bits, table_b.bits)) if p != q), None)
        summary = {"equivalent": mismatch is None, "vars": vars_}
        lines = [f"Variables: {', '.join(f'x{v}' for v in vars_) or '(none)'}"]
        if mismatch is None:
            lines.append("Equivalent on all inputs")
        else:
            bits = "".join(str(b_) for b_ in index_to_bits(mismatch, len(vars_)))
            summary.update({"assignment": bits, "a": table_a.bits[mismatch], "b": table_b.bits[mismatch]})
            lines.append(f"First difference at x = {bits}: {table_a.bits[mismatch]} vs {table_b.bits[mismatch]}")
        self.report("Equivalence", summary, lines)
        return EXIT_OK if mismatch is None else EXIT_MISMATCH

    def classify_toffoli(self, m: Optional[int], pre: Optional[str], post: Optional[str],
                         file_path: Optional[str]) -> int:
        if file_path:
            pre_channels, post_channel, m = self._dressing_from_file(file_path)
        else:
            if m is None:
                raise UsageError("classify-toffoli needs --m or --file")
            names = (pre or ",".join(["id"] * m)).split(",")
            if len(names) != m:
                raise UsageError(f"--pre needs {m} comma-separated names, got {len(names)}")
            pre_channels = [toffoli.named_channel(n.strip()) for n in names]
            post_channel = toffoli.named_channel(post) if post else None

        table = toffoli.classify_depth_one(pre_channels, post_channel, m, self.tol)
        summary = {"m": m, "table": table.to_string(), "in_f_tof": True}
        self.report("Toffoli Classification", summary, [
            f"m={m}",
            f"table: {table.to_string()}",
            f"Member of F_tof({m}): yes",
        ])
        return EXIT_OK

    def _dressing_from_file(self, path: str) -> Tuple[List[Channel], Optional[Channel], int]:
        try:
            doc = json.loads(self.read(path))
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg} (line {e.lineno})") from e
        if not isinstance(doc, dict) or not isinstance(doc.get("pre"), list):
            raise ParseError("dressing file needs a 'pre' list of channels")
        pre = [Channel.from_json(c, ["pre", i], self.tol) for i, c in enumerate(doc["pre"])]
        post = None if doc.get("post") is None else Channel.from_json(doc["post"], ["post"], self.tol)
        m = doc.get("m", len(pre))
        if m != len(pre):
            raise ParseError(f"m={m} but {len(pre)} pre channels", ["m"])
        return pre, post, m

    def affine_check(self, path: Optional[str], table_bits: Optional[str]) -> int:
        if table_bits:
            try:
                table = TruthTable.from_string(table_bits)
            except ValueError as e:
                raise UsageError(str(e)) from e
        elif path:
            table = truth_table(self.load(path), self.tol, self.threads).table
        else:
            raise UsageError("affine-check needs a file or --table BITS")
        affine = oqp.affine_check(table)
        verdict = "affine" if affine else "non-affine"
        summary = {"table": table.to_string(), "affine": affine, "degree": oqp.anf_degree(table)}
        self.report("Affine Check", summary, [f"{verdict} (ANF degree {summary['degree']})"])
        return EXIT_OK

    def gen(self, kind: str, cfg: genrand.GenConfig, count: int, out: Optional[str]) -> int:
        items = genrand.gen_corpus(kind, cfg, count, progress=self.progress)
        written = []
        for index, (obj, meta) in enumerate(items):
            text = dumps(obj, meta)
            if out is None:
                print(text)
                continue
            path = out if count == 1 else os.path.join(out, f"{kind}-{index:04d}.json")
            self.write(path, text)
            written.append(path)
        if out is not None:
            self.report("Generation", {"kind": kind, "count": count, "files": written}, [
                f"Kind: {kind}",
                f"Generated {count} item(s) from seed {cfg.seed}",
                f"Output: {out}",
            ])
        return EXIT_OK


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(description="Quantum formula toolkit")
    parser.add_argument('--threads', type=int, default=None,
                        help='Worker threads for enumeration (0 = all CPUs; default $QF_THREADS or 0)')
    parser.add_argument('--eps-num', type=float, default=CONFIG['eps_num'])
    parser.add_argument('--eps-dedup', type=float, default=CONFIG['eps_dedup'])
    parser.add_argument('--eps-classical', type=float, default=CONFIG['eps_classical'])
    parser.add_argument('--json', action='store_true', help='Print reports as JSON')
    parser.add_argument('--progress', action='store_true', default=CONFIG['progress'],
                        help='Show progress bars')
    parser.add_argument('--verbose', action='store_true', help='Debug logging')
    parser.add_argument('--log-file', help='Also write the log to this file')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_ArgumentParser)

    p = sub.add_parser('simulate', help='Evaluate an IR file on one input or all inputs')
    p.add_argument('path')
    p.add_argument('--x', help='Input bits, x0 first')
    p.add_argument('--all', action='store_true', help='Tabulate every input')
    p.add_argument('--csv', help='Write the truth table to a CSV file')

    p = sub.add_parser('dequantize', help='Turn a read-once quantum formula into a classical one')
    p.add_argument('path')
    p.add_argument('--delta', type=float, default=None, help='Bounded-error budget (exact if omitted)')
    p.add_argument('--out', help='Classical formula output file')
    p.add_argument('--certificates', help='Write the full result with gate certificates')
    p.add_argument('--max-arity', type=int, default=dequantize.DEFAULT_MAX_ARITY)

    p = sub.add_parser('compile-oqp', help='Compile a boolean circuit into a one-qubit program')
    p.add_argument('path')
    p.add_argument('--out', help='Program output file')

    p = sub.add_parser('verify-equiv', help='Compare two IR files on all inputs')
    p.add_argument('path_a')
    p.add_argument('path_b')

    p = sub.add_parser('classify-toffoli', help='Tabulate a dressed traced-Toffoli gate')
    p.add_argument('--m', type=int)
    p.add_argument('--pre', help='Comma-separated channel names, one per input')
    p.add_argument('--post', help='Output channel name')
    p.add_argument('--file', help='JSON file with "pre", "post" and "m"')

    p = sub.add_parser('affine-check', help='Test whether a function is affine over F2')
    p.add_argument('path', nargs='?')
    p.add_argument('--table', help='Truth table bits, e.g. 0110')

    p = sub.add_parser('gen', help='Generate seeded corpora')
    p.add_argument('kind', choices=genrand.KINDS)
    p.add_argument('--seed', type=int, default=CONFIG['seed'])
    p.add_argument('--max-vars', type=int, default=CONFIG['max_vars'])
    p.add_argument('--max-depth', type=int, default=CONFIG['max_depth'])
    p.add_argument('--max-arity', type=int, default=CONFIG['max_arity'])
    p.add_argument('--noise', type=float, default=0.0)
    p.add_argument('--rounds', type=int, default=1, help='Obfuscation rounds per wire')
    p.add_argument('--count', type=int, default=1)
    p.add_argument('--out', help='Output file (count 1) or directory')
    return parser


def resolve_thread_setting(flag: Optional[int]) -> int:
    if flag is None:
        env = os.environ.get('QF_THREADS')
        try:
            flag = int(env) if env else CONFIG['threads']
        except ValueError:
            raise UsageError(f"QF_THREADS must be an integer, got '{env}'") from None
    if flag < 0:
        raise UsageError("--threads must be non-negative")
    return resolve_threads(flag)


def run(args: argparse.Namespace) -> int:
    try:
        tol = Tolerances(args.eps_num, args.eps_dedup, args.eps_classical)
    except ValueError as e:
        raise UsageError(str(e)) from e
    manager = FormulaManager(tol, resolve_thread_setting(args.threads), args.json, args.progress)

    if args.command == 'simulate':
        return manager.simulate(args.path, args.x, args.all, args.csv)
    if args.command == 'dequantize':
        return manager.dequantize(args.path, args.delta, args.out, args.certificates, args.max_arity)
    if args.command == 'compile-oqp':
        return manager.compile_oqp(args.path, args.out)
    if args.command == 'verify-equiv':
        return manager.verify_equiv(args.path_a, args.path_b)
    if args.command == 'classify-toffoli':
        return manager.classify_toffoli(args.m, args.pre, args.post, args.file)
    if args.command == 'affine-check':
        return manager.affine_check(args.path, args.table)
    try:
        cfg = genrand.GenConfig(
            seed=args.seed, max_vars=args.max_vars, max_depth=args.max_depth,
            max_arity=args.max_arity, noise=args.noise, obfuscation_rounds=args.rounds,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e
    if args.count < 1:
        raise UsageError("--count must be positive")
    return manager.gen(args.kind, cfg, args.count, args.out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main execution function."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.log_file)
    try:
        return run(args)
    except KeyboardInterrupt:
        print("\nOperation cancelled by user")
        return EXIT_USAGE
    except QFormulaError as e:
        logging.error(f"{type(e).__name__}: {str(e)}", exc_info=args.verbose)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        logging.error(f"Invalid argument: {str(e)}", exc_info=args.verbose)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
