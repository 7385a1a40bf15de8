"""Command-line front door.

    execrl grade --dataset problems.jsonl --candidates cands.jsonl \
        --out grading.jsonl --summary summary.json --k 1 --k 5
    execrl report --grading grading.jsonl [--compare other.jsonl] [--chart f.png]
    execrl classify --source prog.py --tests tests.json
    execrl serve-buffer --bind 127.0.0.1:7077 --capacity 6400
    execrl train-demo --config config.json --out metrics.jsonl

Exit codes: 0 success (failing candidates are data, not errors), 2 input
parse error, 3 sandbox unavailable. All reports are machine-readable JSON;
charts are optional garnish. The sandbox interpreter and shim can be set
with EXECRL_PYTHON / EXECRL_SHIM or the --shim flag.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import defaultdict
from pathlib import Path

from . import serde
from .buffer import BufferServer, OnlineBuffer
from .classify import classify, error_distribution
from .errors import EmptyInput, SandboxUnavailable
from .metrics import pass_at_k, pass_at_k_naive
from .model import Problem, Verdict
from .rewards import DEFAULT_FINE_PENALTY, bundle
from .sandbox import ExecutionLimits, execute, execute_batch
from .tokens import candidate_from_source
from .trainer import ExperimentConfig, run_experiment

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SANDBOX = 3


def _fail_parse(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_PARSE


def cmd_grade(args: argparse.Namespace) -> int:
    try:
        problems = {p.id: p for p in serde.load_problems(args.dataset)}
        records = serde.load_candidate_records(args.candidates)
    except (OSError, ValueError) as exc:
        return _fail_parse(str(exc))

    jobs = []
    metas = []
    for i, rec in enumerate(records):
        problem = problems.get(rec["problem_id"])
        if problem is None:
            return _fail_parse(f"candidate {i} references unknown problem "
                               f"{rec['problem_id']!r}")
        candidate = candidate_from_source(
            rec["source"], truncated=bool(rec.get("truncated", False))
        )
        jobs.append((problem, candidate))
        metas.append({"problem_id": problem.id,
                      "candidate_id": rec.get("candidate_id", str(i))})

    limits = ExecutionLimits(per_test_seconds=args.timeout_secs)
    try:
        outcome_lists = execute_batch(
            jobs, limits, workers=args.workers, shim_path=args.shim
        )
    except SandboxUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SANDBOX

    estimator = pass_at_k_naive if args.raw_best_of_k else pass_at_k
    per_problem: dict[str, list[bool]] = defaultdict(list)
    verdict_counts = {v.value: 0 for v in Verdict}
    sub_counts: dict[str, int] = defaultdict(int)

    out_path = Path(args.out)
    with open(out_path, "w", encoding="utf-8") as fh:
        for (problem, candidate), meta, outcomes in zip(jobs, metas, outcome_lists):
            feedback = classify(problem, candidate, outcomes)
            rewards = bundle(feedback, candidate, args.penalty_fine)
            verdict_counts[feedback.verdict.value] += 1
            if feedback.sub_error is not None:
                sub_counts[feedback.sub_error.value] += 1
            per_problem[problem.id].append(feedback.verdict is Verdict.PASS)
            fh.write(serde.encode_line({
                **meta,
                "feedback": serde.feedback_to_dict(feedback),
                "rewards": serde.rewards_to_dict(rewards),
                "test_statuses": [o.status.value for o in outcomes],
                "wall_time": sum(o.wall_time for o in outcomes),
            }))

    pass_at: dict[str, dict[str, float]] = {}
    for pid, results in per_problem.items():
        n, c = len(results), sum(results)
        pass_at[pid] = {
            f"pass@{k}": estimator(n, c, k) for k in args.k if 1 <= k <= n
        }
    mean_pass_at = {}
    for k in args.k:
        key = f"pass@{k}"
        values = [v[key] for v in pass_at.values() if key in v]
        if values:
            mean_pass_at[key] = sum(values) / len(values)

    summary = {
        "candidates": len(jobs),
        "problems": len(per_problem),
        "verdicts": verdict_counts,
        "sub_errors": dict(sorted(sub_counts.items())),
        "pass_at_k": {"estimator": "raw-best-of-k" if args.raw_best_of_k
                      else "unbiased",
                      "per_problem": pass_at, "mean": mean_pass_at},
        "grading_file": str(out_path),
    }
    summary_text = json.dumps(summary, indent=2, sort_keys=True)
    if args.summary:
        Path(args.summary).write_text(summary_text + "\n", encoding="utf-8")
    print(summary_text)
    return EXIT_OK


def _distribution_of(path: str) -> tuple[dict[str, float], dict[str, float]]:
    feedbacks = [
        serde.feedback_from_dict(rec["feedback"]) for rec in serde.iter_jsonl(path)
    ]
    return error_distribution(feedbacks)


def cmd_report(args: argparse.Namespace) -> int:
    try:
        verdicts, subs = _distribution_of(args.grading)
        report: dict = {"verdicts": verdicts, "sub_errors": subs}
        if args.compare:
            verdicts_b, subs_b = _distribution_of(args.compare)
            report = {
                "before": report,
                "after": {"verdicts": verdicts_b, "sub_errors": subs_b},
                "verdict_delta": {
                    key: verdicts_b.get(key, 0.0) - verdicts.get(key, 0.0)
                    for key in sorted(set(verdicts) | set(verdicts_b))
                },
                "sub_error_delta": {
                    key: subs_b.get(key, 0.0) - subs.get(key, 0.0)
                    for key in sorted(set(subs) | set(subs_b))
                },
            }
    except (OSError, ValueError, KeyError, EmptyInput) as exc:
        return _fail_parse(str(exc))

    print(json.dumps(report, indent=2, sort_keys=True))
    if args.chart:
        _write_chart(report, args.chart)
    return EXIT_OK


def _write_chart(report: dict, path: str) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("warning: matplotlib unavailable, skipping chart", file=sys.stderr)
        return
    data = report.get("sub_error_delta") or report.get("sub_errors") or {}
    fig, ax = plt.subplots(figsize=(10, 4))
    ax.bar(list(data.keys()), list(data.values()))
    ax.set_ylabel("delta" if "sub_error_delta" in report else "fraction")
    ax.set_title("sub-error distribution")
    plt.xticks(rotation=45, ha="right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_classify(args: argparse.Namespace) -> int:
    try:
        source = Path(args.source).read_text(encoding="utf-8")
        tests_data = json.loads(Path(args.tests).read_text(encoding="utf-8"))
        tests = tuple(serde.test_case_from_dict(t) for t in tests_data)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _fail_parse(str(exc))
    if not tests:
        return _fail_parse("tests file holds no test cases")

    problem = Problem(id="cli", description="ad-hoc", tests=tests)
    candidate = candidate_from_source(source)
    limits = ExecutionLimits(per_test_seconds=args.timeout_secs)
    try:
        outcomes = execute(problem, candidate, limits, shim_path=args.shim)
    except SandboxUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SANDBOX
    feedback = classify(problem, candidate, outcomes)
    rewards = bundle(feedback, candidate, args.penalty_fine)
    print(json.dumps({
        "feedback": serde.feedback_to_dict(feedback),
        "rewards": serde.rewards_to_dict(rewards),
        "test_statuses": [o.status.value for o in outcomes],
    }, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_serve_buffer(args: argparse.Namespace) -> int:
    host, _, port = args.bind.rpartition(":")
    try:
        port_no = int(port)
    except ValueError:
        return _fail_parse(f"bad --bind address {args.bind!r}")
    buffer = OnlineBuffer(capacity=args.capacity, spill_path=args.spill)

    def log(response: dict) -> None:
        if response.get("ok") and "seq" in response:
            print(f"ack seq={response['seq']}", flush=True)
        elif not response.get("ok"):
            print(f"nack error={response.get('error')}", flush=True)

    server = BufferServer(buffer, host or "127.0.0.1", port_no, log=log)
    actual_host, actual_port = server.address
    print(f"buffer serving on {actual_host}:{actual_port} "
          f"capacity={buffer.capacity}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        buffer.close()
    return EXIT_OK


def cmd_train_demo(args: argparse.Namespace) -> int:
    try:
        config_data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        config = ExperimentConfig.from_dict(config_data)
    except (OSError, ValueError, TypeError) as exc:
        return _fail_parse(str(exc))
    problems = None
    if args.dataset:
        try:
            problems = serde.load_problems(args.dataset)
        except (OSError, ValueError) as exc:
            return _fail_parse(str(exc))
    try:
        metrics = run_experiment(config, problems=problems, metrics_path=args.out)
    except SandboxUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SANDBOX
    print(json.dumps({
        "rounds": len(metrics) - 1,
        "initial_pass_rate": metrics[0]["pass_rate"],
        "final_pass_rate": metrics[-1]["pass_rate"],
        "metrics_file": args.out,
    }, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="execrl",
        description="Grade candidate programs in a sandbox and turn unit-test "
                    "feedback into RL rewards and losses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    grade = sub.add_parser("grade", help="grade a candidate corpus")
    grade.add_argument("--dataset", required=True)
    grade.add_argument("--candidates", required=True)
    grade.add_argument("--out", required=True, help="grading JSONL output")
    grade.add_argument("--summary", help="summary JSON output path")
    grade.add_argument("--k", type=int, action="append", default=None,
                       help="pass@k values to report (repeatable)")
    grade.add_argument("--timeout-secs", type=float, default=10.0)
    grade.add_argument("--workers", type=int, default=2)
    grade.add_argument("--penalty-fine", type=float, default=DEFAULT_FINE_PENALTY)
    grade.add_argument("--shim", help="path to the in-sandbox runner shim")
    grade.add_argument("--raw-best-of-k", action="store_true",
                       help="use the naive 1-(1-c/n)^k estimator")
    grade.set_defaults(func=cmd_grade)

    report = sub.add_parser("report", help="verdict/sub-error distributions")
    report.add_argument("--grading", required=True)
    report.add_argument("--compare", help="second grading file for deltas")
    report.add_argument("--chart", help="optional chart output path")
    report.set_defaults(func=cmd_report)

    class_ = sub.add_parser("classify", help="grade one source file")
    class_.add_argument("--source", required=True)
    class_.add_argument("--tests", required=True,
                        help="JSON list of {input, expected_output}")
    class_.add_argument("--timeout-secs", type=float, default=10.0)
    class_.add_argument("--penalty-fine", type=float, default=DEFAULT_FINE_PENALTY)
    class_.add_argument("--shim", help="path to the in-sandbox runner shim")
    class_.set_defaults(func=cmd_classify)

    serve = sub.add_parser("serve-buffer", help="run the buffer TCP server")
    serve.add_argument("--bind", default="127.0.0.1:0")
    serve.add_argument("--capacity", type=int, default=6400)
    serve.add_argument("--spill", help="append-only JSONL spill file")
    serve.set_defaults(func=cmd_serve_buffer)

    train = sub.add_parser("train-demo", help="run a toy training experiment")
    train.add_argument("--config", required=True, help="experiment config JSON")
    train.add_argument("--out", help="metrics JSONL output path")
    train.add_argument("--dataset", help="problem set (default: bundled suite)")
    train.set_defaults(func=cmd_train_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "k", None) is None and args.command == "grade":
        args.k = [1]
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
