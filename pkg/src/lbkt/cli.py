"""Command-line entry points.

Subcommands: gen-data, filter-sessions, run-exp, sweep, grid, train-toy,
bkt-fit, serve. Each accepts --config pointing at a JSON file; explicit flags
override config values. Exit codes: 0 success, 2 usage or validation error,
1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bkt import BktParams, evaluate_last_n, fit_per_skill
from .gateway import BackendSpec
from .grpo import GrpoConfig, ToyStudent, ToyTask, standard_templates, train_toy_encoder
from .harness import (
    ExperimentConfig,
    bottleneck_sweep,
    encoder_decoder_grid,
    run_experiment,
    write_report,
)
from .ingest import (
    SessionFilterConfig,
    bank_from_records,
    filter_single_session,
    load_dataset,
    parse_records,
    save_dataset,
)
from .rewards import RewardWeights
from .students import Dataset, SimConfig, generate_dataset


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _merged(args: argparse.Namespace, config: dict, keys: list[str]) -> dict:
    """Config file values, overridden by any flag the user actually passed."""
    merged = {k: v for k, v in config.items() if k in keys}
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _backend(value, default_kind: str = "oracle") -> BackendSpec:
    """Backend from 'oracle', 'replay:<transcript>', 'http:<url>' or a dict."""
    if value is None:
        return BackendSpec(kind=default_kind)
    if isinstance(value, BackendSpec):
        return value
    if isinstance(value, dict):
        return BackendSpec(**value)
    if value == "oracle":
        return BackendSpec(kind="oracle")
    if value.startswith("replay:"):
        return BackendSpec(kind="replay", transcript_path=value.split(":", 1)[1])
    if value.startswith("http:") or value.startswith("https:"):
        return BackendSpec(kind="http", endpoint=value)
    raise ValueError(f"cannot parse backend {value!r}")


def _cmd_gen_data(args) -> int:
    config = _load_config(args.config)
    fields = [
        "n_students",
        "n_questions",
        "per_student",
        "master_prob",
        "slip_rate",
        "guess_rate",
        "seed",
    ]
    sim = SimConfig(**_merged(args, config, fields))
    dataset = generate_dataset(sim)
    save_dataset(dataset, args.out)
    print(
        f"wrote {len(dataset.profiles)} students x {sim.per_student} interactions "
        f"({len(dataset.bank)} bank questions) to {args.out}"
    )
    return 0


def _cmd_filter_sessions(args) -> int:
    config = _load_config(args.config)
    fields = ["min_response_time", "max_gap", "min_length"]
    filter_config = SessionFilterConfig(**_merged(args, config, fields))
    with open(args.records) as f:
        records = parse_records(f)
    trajectories = filter_single_session(records, filter_config)
    dataset = Dataset(
        bank=bank_from_records(records), profiles=[], trajectories=trajectories
    )
    save_dataset(dataset, args.out)
    print(
        f"kept {len(trajectories)} trajectories "
        f"({sum(len(t.interactions) for t in trajectories)} interactions) "
        f"from {len(records)} raw records"
    )
    return 0


def _experiment_config(args, config: dict) -> ExperimentConfig:
    fields = [
        "mode",
        "n_enc",
        "n_recon",
        "n_pred",
        "budget",
        "chain_of_thought",
        "n_test_students",
        "seed",
        "holdout_last",
        "steering_text",
    ]
    values = _merged(args, config, fields)
    encoder = _backend(getattr(args, "encoder", None) or config.get("encoder"))
    decoder = _backend(getattr(args, "decoder", None) or config.get("decoder"))
    dataset_path = getattr(args, "dataset", None) or config.get("dataset")
    if not dataset_path:
        raise ValueError("a dataset path is required (--dataset or config)")
    return ExperimentConfig(
        encoder=encoder,
        decoder=decoder,
        dataset_path=dataset_path,
        out_dir=getattr(args, "out", None) or config.get("out_dir"),
        **values,
    )


def _cmd_run_exp(args) -> int:
    config = _experiment_config(args, _load_config(args.config))
    report = run_experiment(config)
    sem = f"{report.sem:.4f}" if report.sem is not None else "n/a"
    print(
        f"accuracy {report.mean_accuracy:.4f} +/- {sem} "
        f"over {report.n_students} students"
    )
    return 0


def _cmd_sweep(args) -> int:
    config = _experiment_config(args, _load_config(args.config))
    budgets = [int(b) for b in args.budgets.split(",")]
    reports = bottleneck_sweep(config, budgets)
    for budget in sorted(reports):
        r = reports[budget]
        sem = f"{r.sem:.4f}" if r.sem is not None else "n/a"
        print(f"budget {budget:5d}: accuracy {r.mean_accuracy:.4f} +/- {sem}")
    return 0


def _cmd_grid(args) -> int:
    file_config = _load_config(args.config)
    config = _experiment_config(args, file_config)
    encoders = [_backend(v) for v in (args.encoders.split(",") if args.encoders else file_config.get("encoders", ["oracle"]))]
    decoders = [_backend(v) for v in (args.decoders.split(",") if args.decoders else file_config.get("decoders", ["oracle"]))]
    grid = encoder_decoder_grid(config, encoders, decoders)
    for cell, value in grid["cells"].items():
        print(f"{cell}: {value:.4f}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "grid.json").write_text(
            json.dumps(grid, sort_keys=True, indent=2) + "\n"
        )
    return 0


def _cmd_train_toy(args) -> int:
    config = _load_config(args.config)
    fields = ["group_size", "learning_rate", "kl_coefficient", "batch_size", "n_steps", "seed"]
    grpo_config = GrpoConfig(**_merged(args, config, fields))
    weights = RewardWeights(
        w_omega=args.w_omega if args.w_omega is not None else config.get("w_omega", 0.0),
        budget=args.budget if args.budget is not None else config.get("budget", 128),
    )
    dataset = load_dataset(args.dataset)
    bank = dataset.questions_by_id
    n_students = args.n_students or config.get("n_students", 20)

    from .pipeline import sample_split

    students = []
    for trajectory in dataset.trajectories[:n_students]:
        profile = dataset.profile(trajectory.student_id)
        if profile is None:
            raise ValueError("train-toy needs a synthetic dataset with profiles")
        split = sample_split(
            trajectory, n_enc=args.n_enc or 50, n_pred=args.n_pred or 4,
            seed=[grpo_config.seed, len(students)],
        )
        students.append(
            ToyStudent(
                id=trajectory.student_id,
                templates=standard_templates(profile, include_unlabeled_twin=True),
                questions=[bank[i.question_id] for i in split.y_s],
                truth={i.question_id: i.correct for i in split.y_s},
            )
        )
    trace = train_toy_encoder(ToyTask(students=students), grpo_config, weights)
    if args.out:
        trace.save(args.out)
    final = trace.steps[-1]
    print(
        f"step {final.step}: reward {final.mean_reward:.3f}, "
        f"decode accuracy {final.expected_accuracy:.3f}, "
        f"omega rate {final.expected_omega_rate:.3f}"
    )
    return 0


def _cmd_bkt_fit(args) -> int:
    dataset = load_dataset(args.dataset)
    n_test = args.n_test_students or 0
    trajectories = dataset.trajectories
    train = trajectories[:-n_test] if n_test else trajectories
    test = trajectories[-n_test:] if n_test else trajectories
    results = fit_per_skill(train, dataset.questions_by_id)
    params = {skill: r.params for skill, r in results.items()}
    for skill, result in results.items():
        p = result.params
        print(
            f"{skill}: init {p.p_init:.3f} learn {p.p_learn:.3f} "
            f"guess {p.p_guess:.3f} slip {p.p_slip:.3f} "
            f"(ll {result.log_likelihoods[-1]:.1f}, {result.n_iterations} iters)"
        )
    acc = evaluate_last_n(test, dataset.questions_by_id, params, n=args.last_n)
    print(f"last-{args.last_n} accuracy: {acc:.4f}")
    if args.out:
        with open(args.out, "w") as f:
            for skill in sorted(params):
                f.write(
                    json.dumps({"skill": skill, **params[skill].as_dict()}, sort_keys=True)
                    + "\n"
                )
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    dataset = load_dataset(args.dataset)
    app = create_app(
        dataset,
        encoder=_backend(args.encoder),
        decoder=_backend(args.decoder),
        n_pred=args.n_pred or 4,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lbkt",
        description="Knowledge tracing through natural-language knowledge summaries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--n-students", dest="n_students", type=int)
    p.add_argument("--n-questions", dest="n_questions", type=int)
    p.add_argument("--per-student", dest="per_student", type=int)
    p.add_argument("--master-prob", dest="master_prob", type=float)
    p.add_argument("--slip-rate", dest="slip_rate", type=float)
    p.add_argument("--guess-rate", dest="guess_rate", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("filter-sessions", help="clean a raw response log")
    p.add_argument("--config")
    p.add_argument("--records", required=True, help="CSV interaction log")
    p.add_argument("--out", required=True)
    p.add_argument("--min-response-time", dest="min_response_time", type=float)
    p.add_argument("--max-gap", dest="max_gap", type=float)
    p.add_argument("--min-length", dest="min_length", type=int)
    p.set_defaults(func=_cmd_filter_sessions)

    def add_experiment_flags(p):
        p.add_argument("--config")
        p.add_argument("--dataset")
        p.add_argument("--encoder")
        p.add_argument("--decoder")
        p.add_argument("--mode", choices=["lbm", "direct"])
        p.add_argument("--n-enc", dest="n_enc", type=int)
        p.add_argument("--n-recon", dest="n_recon", type=int)
        p.add_argument("--n-pred", dest="n_pred", type=int)
        p.add_argument("--budget", type=int)
        p.add_argument("--n-test-students", dest="n_test_students", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--steering-text", dest="steering_text")
        p.add_argument("--out")

    p = sub.add_parser("run-exp", help="run one evaluation configuration")
    add_experiment_flags(p)
    p.set_defaults(func=_cmd_run_exp)

    p = sub.add_parser("sweep", help="run the same splits across token budgets")
    add_experiment_flags(p)
    p.add_argument("--budgets", default="128,256,512")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("grid", help="cross encoders with decoders")
    add_experiment_flags(p)
    p.add_argument("--encoders")
    p.add_argument("--decoders")
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("train-toy", help="group-relative training on template policies")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.add_argument("--n-students", dest="n_students", type=int)
    p.add_argument("--n-enc", dest="n_enc", type=int)
    p.add_argument("--n-pred", dest="n_pred", type=int)
    p.add_argument("--group-size", dest="group_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--kl-coefficient", dest="kl_coefficient", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--w-omega", dest="w_omega", type=float)
    p.add_argument("--budget", type=int)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("bkt-fit", help="fit the per-skill mastery baseline")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.add_argument("--n-test-students", dest="n_test_students", type=int)
    p.add_argument("--last-n", dest="last_n", type=int, default=4)
    p.set_defaults(func=_cmd_bkt_fit)

    p = sub.add_parser("serve", help="start the steering service")
    p.add_argument("--dataset", required=True)
    p.add_argument("--encoder")
    p.add_argument("--decoder")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--n-pred", dest="n_pred", type=int)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
