"""Command-line pipeline: ingest/synth -> train-ae -> encode -> sample ->
train -> evaluate -> report.

Every config leaf is overridable with a dotted flag (e.g.
--reward.c_wait -0.1) taking precedence over --config, which takes
precedence over defaults. Exit codes: 0 success, 1 usage error, 2
data/validation error.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

import numpy as np

from nidseq import autoencoder as ae
from nidseq import baselines, config, evaluate, synth, transformer
from nidseq import trajectory as traj
from nidseq._validation import NidseqError
from nidseq.capture import ingest_capture, read_records_jsonl
from nidseq.flows import (
    Flow,
    group_flows,
    label_flows,
    read_flows_jsonl,
    read_label_table,
    write_flows_jsonl,
)

MODEL_NAMES = ("dt", "bc", "dnn")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message):
        raise _UsageError(message)


def _workpath(cfg: config.PipelineConfig, name: str) -> str:
    return os.path.join(cfg.paths.workdir, name)


def _require(path: str, hint: str) -> str:
    if not os.path.exists(path):
        raise FileNotFoundError(f"{path} not found; run `nidseq {hint}` first")
    return path


def _load_encoded_flows(cfg: config.PipelineConfig) -> dict[str, traj.EncodedFlow]:
    flows = read_flows_jsonl(_require(_workpath(cfg, "flows.jsonl"), "ingest or synth"))
    embeddings = ae.read_embeddings_jsonl(_require(_workpath(cfg, "embeddings.jsonl"), "encode"))
    encoded = {}
    for flow in flows:
        if flow.flow_id not in embeddings:
            raise ValueError(f"flow {flow.flow_id} has no embeddings; re-run encode")
        encoded[flow.flow_id] = traj.encode_flow(flow, embeddings[flow.flow_id])
    return encoded


def _load_split(cfg: config.PipelineConfig) -> dict[str, list[str]]:
    path = _require(_workpath(cfg, "split.json"), "sample")
    with open(path, "r", encoding="utf-8") as fh:
        split = json.load(fh)
    for key in ("train", "test"):
        if key not in split:
            raise ValueError(f"{path}: missing key {key!r}")
    return split


def cmd_ingest(cfg: config.PipelineConfig) -> int:
    src = cfg.paths.capture
    if not src:
        raise ValueError("paths.capture is empty; point it at a .pcap or .jsonl file")
    if src.endswith(".jsonl"):
        records = read_records_jsonl(src)
        truncated = skipped = 0
    else:
        records, stats = ingest_capture(src, cfg.ingest.n_p)
        truncated, skipped = stats.truncated_payloads, stats.malformed_skipped
    flows = group_flows(records, cfg.ingest.gap_timeout)
    dropped = 0
    if cfg.paths.ground_truth:
        truth = read_label_table(cfg.paths.ground_truth)
        flows, dropped = label_flows(flows, truth)
    os.makedirs(cfg.paths.workdir, exist_ok=True)
    out = _workpath(cfg, "flows.jsonl")
    write_flows_jsonl(out, flows)
    print(
        f"packets={len(records)} flows={len(flows)} dropped={dropped} "
        f"truncated={truncated} skipped={skipped}"
    )
    print(f"wrote {out}")
    return 0


def cmd_synth(cfg: config.PipelineConfig) -> int:
    flows = synth.generate_flows(
        n_flows=cfg.synth.n_flows,
        max_len=cfg.synth.max_len,
        pattern_byte=cfg.synth.pattern_byte,
        seed=cfg.seeds.synth,
        n_p=cfg.ingest.n_p,
        plant_density=cfg.synth.plant_density,
        mean_gap=cfg.synth.mean_gap,
    )
    os.makedirs(cfg.paths.workdir, exist_ok=True)
    out = _workpath(cfg, "flows.jsonl")
    write_flows_jsonl(out, flows)
    n_mal = sum(1 for f in flows if f.label == 1)
    print(f"flows={len(flows)} malicious={n_mal} benign={len(flows) - n_mal}")
    print(f"wrote {out}")
    return 0


def _payload_matrix(flows: list[Flow]) -> np.ndarray:
    rows = [np.frombuffer(p.payload, dtype=np.uint8) for f in flows for p in f.packets]
    return np.asarray(rows, dtype=np.float64)


def cmd_train_ae(cfg: config.PipelineConfig) -> int:
    flows = read_flows_jsonl(_require(_workpath(cfg, "flows.jsonl"), "ingest or synth"))
    x = _payload_matrix(flows)
    params, losses = ae.train_autoencoder(
        x / 255.0,
        h=cfg.autoencoder.h,
        n_b=cfg.autoencoder.n_b,
        activation=cfg.autoencoder.activation,
        learning_rate=cfg.autoencoder.learning_rate,
        epochs=cfg.autoencoder.epochs,
        batch_size=cfg.autoencoder.batch_size,
        seed=cfg.seeds.autoencoder,
    )
    out = _workpath(cfg, "autoencoder.bin")
    ae.save_params(out, params)
    for i, loss in enumerate(losses, start=1):
        print(f"epoch {i}: loss {loss:.6f}")
    print(f"wrote {out}")
    return 0


def cmd_encode(cfg: config.PipelineConfig) -> int:
    flows = read_flows_jsonl(_require(_workpath(cfg, "flows.jsonl"), "ingest or synth"))
    params = ae.load_params(_require(_workpath(cfg, "autoencoder.bin"), "train-ae"))
    rows = []
    for flow in flows:
        payloads = np.asarray(
            [np.frombuffer(p.payload, dtype=np.uint8) for p in flow.packets], dtype=np.float64
        )
        z = ae.encode(params, payloads / 255.0)
        rows.extend((flow.flow_id, i, z[i]) for i in range(len(flow.packets)))
    out = _workpath(cfg, "embeddings.jsonl")
    ae.write_embeddings_jsonl(out, rows)
    print(f"embedded {len(rows)} packets from {len(flows)} flows")
    print(f"wrote {out}")
    return 0


def cmd_sample(cfg: config.PipelineConfig) -> int:
    encoded = _load_encoded_flows(cfg)
    flows = list(encoded.values())
    train_flows, test_flows = traj.split_dataset(
        flows, cfg.sampling.test_fraction, cfg.seeds.split
    )
    if cfg.sampling.oversample:
        # Oversampling applies to the training side only.
        train_flows = traj.balance_oversample(train_flows, cfg.seeds.split + 1)
    dataset = traj.build_dataset(
        train_flows, cfg.sampling.policy, cfg.reward, cfg.seeds.trajectory, split="train"
    )
    out = _workpath(cfg, "trajectories_train.jsonl")
    traj.write_dataset_jsonl(out, dataset)
    split = {
        "train": [f.flow_id for f in train_flows],
        "test": [f.flow_id for f in test_flows],
    }
    with open(_workpath(cfg, "split.json"), "w", encoding="utf-8") as fh:
        json.dump(split, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"policy={cfg.sampling.policy} train_flows={len(train_flows)} "
        f"test_flows={len(test_flows)} trajectories={len(dataset.trajectories)}"
    )
    print(f"wrote {out}")
    return 0


def _read_train_dataset(cfg: config.PipelineConfig) -> traj.OfflineDataset:
    path = _require(_workpath(cfg, "trajectories_train.jsonl"), "sample")
    return traj.read_dataset_jsonl(path, reward_config=cfg.reward, split="train")


def cmd_train(cfg: config.PipelineConfig, model_name: str) -> int:
    if model_name == "dt":
        dataset = _read_train_dataset(cfg)
        obs_dim = dataset.trajectories[0].steps[0].obs.shape[0]
        mcfg = transformer.ModelConfig(
            k=cfg.model.k,
            d_time=cfg.model.d_time,
            d_value=cfg.model.d_value,
            d_type=cfg.model.d_type,
            n_layers=cfg.model.n_layers,
            n_heads=cfg.model.n_heads,
            d_ff=cfg.model.d_ff,
            c=cfg.model.c,
            obs_dim=obs_dim,
            n_decisions=cfg.model.n_decisions,
            action_mode=cfg.model.action_mode,
            lambda_wait=cfg.model.lambda_wait,
        )
        params = transformer.init_params(mcfg, cfg.seeds.model)
        tcfg = transformer.TrainConfig(
            learning_rate=cfg.train.learning_rate,
            batch_size=cfg.train.batch_size,
            steps=cfg.train.steps,
            grad_clip=cfg.train.grad_clip,
            seed=cfg.seeds.model,
        )
        params, losses = transformer.train(params, mcfg, dataset.trajectories, tcfg)
        out = _workpath(cfg, "model_dt.bin")
        transformer.save_model(out, params, mcfg)
    elif model_name == "bc":
        dataset = _read_train_dataset(cfg)
        params, losses = baselines.bc_train(
            dataset,
            learning_rate=cfg.bc.learning_rate,
            batch_size=cfg.bc.batch_size,
            steps=cfg.bc.steps,
            seed=cfg.seeds.bc,
            grad_clip=cfg.bc.grad_clip,
        )
        out = _workpath(cfg, "model_bc.bin")
        baselines.save_mlp(
            out, params, "bc", {"wait_estimate": baselines.mean_trace_gap(dataset.trajectories)}
        )
    elif model_name == "dnn":
        encoded = _load_encoded_flows(cfg)
        split = _load_split(cfg)
        xs, ys = [], []
        for fid in split["train"]:
            flow = encoded.get(fid)
            if flow is None:
                raise ValueError(f"split references unknown flow {fid}")
            xs.append(flow.obs)
            ys.extend([flow.label] * flow.n_packets)
        params, losses = baselines.dnn_train(
            np.concatenate(xs, axis=0),
            np.asarray(ys, dtype=np.int64),
            learning_rate=cfg.dnn.learning_rate,
            batch_size=cfg.dnn.batch_size,
            steps=cfg.dnn.steps,
            seed=cfg.seeds.dnn,
            grad_clip=cfg.dnn.grad_clip,
        )
        out = _workpath(cfg, "model_dnn.bin")
        baselines.save_mlp(out, params, "dnn")
    else:
        raise ValueError(f"unknown model {model_name!r}; expected one of {MODEL_NAMES}")
    print(f"final loss {losses[-1]:.6f} after {len(losses)} steps")
    print(f"wrote {out}")
    return 0


def _test_flows(cfg: config.PipelineConfig) -> list[traj.EncodedFlow]:
    encoded = _load_encoded_flows(cfg)
    split = _load_split(cfg)
    missing = [fid for fid in split["test"] if fid not in encoded]
    if missing:
        raise ValueError(f"split references unknown flow {missing[0]}")
    return [encoded[fid] for fid in split["test"]]


def cmd_evaluate(cfg: config.PipelineConfig, model_name: str) -> int:
    if model_name == "dnn":
        test_flows = _test_flows(cfg)
        params, _ = baselines.load_mlp(
            _require(_workpath(cfg, "model_dnn.bin"), "train dnn"), "dnn"
        )
        y_true = [f.label for f in test_flows for _ in range(f.n_packets)]
        y_pred = np.concatenate([baselines.dnn_predict(params, f.obs) for f in test_flows])
        obj = evaluate.metrics_to_obj(
            evaluate.packet_metrics(y_true, y_pred), cfg.sampling.policy, "dnn"
        )
    elif model_name in ("dt", "bc"):
        dataset = _read_train_dataset(cfg)
        test_flows = _test_flows(cfg)
        refs = evaluate.reference_returns(
            dataset.trajectories,
            test_flows,
            cfg.reward,
            cfg.seeds.eval,
            n_replicates=cfg.eval.n_replicates,
        )
        if model_name == "dt":
            params, mcfg = transformer.load_model(
                _require(_workpath(cfg, "model_dt.bin"), "train dt")
            )
            policy = evaluate.SequencePolicy(params, mcfg)
        else:
            params, meta = baselines.load_mlp(
                _require(_workpath(cfg, "model_bc.bin"), "train bc"), "bc"
            )
            policy = evaluate.BCPolicy(params, float(meta.get("wait_estimate", 0.0)))
        results = [
            evaluate.replay_episode(policy, flow, refs["max_return"], cfg.reward)
            for flow in test_flows
        ]
        evaluate.write_episodes_jsonl(_workpath(cfg, f"episodes_{model_name}.jsonl"), results)
        report = evaluate.compute_metrics(
            results, refs["expert_return"], refs["random_return"]
        )
        obj = evaluate.metrics_to_obj(report, dataset.policy_tag, model_name)
    else:
        raise ValueError(f"unknown model {model_name!r}; expected one of {MODEL_NAMES}")
    out = _workpath(cfg, f"metrics_{model_name}.json")
    evaluate.write_metrics_json(out, obj)
    print(evaluate.render_table([obj]), end="")
    print(f"wrote {out}")
    return 0


def cmd_report(cfg: config.PipelineConfig, svg: bool) -> int:
    paths = sorted(glob.glob(_workpath(cfg, "metrics_*.json")))
    if not paths:
        raise FileNotFoundError(
            f"no metrics_*.json in {cfg.paths.workdir}; run `nidseq evaluate` first"
        )
    rows = [evaluate.read_metrics_json(p) for p in paths]
    table = evaluate.render_table(rows)
    with open(_workpath(cfg, "table.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table, end="")
    if svg:
        chart = evaluate.render_svg(rows)
        with open(_workpath(cfg, "chart.svg"), "w", encoding="utf-8") as fh:
            fh.write(chart)
        print(f"wrote {_workpath(cfg, 'chart.svg')}")
    print(f"wrote {_workpath(cfg, 'table.txt')}")
    return 0


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="JSON config file")
    for dotted, _ in config.dotted_fields():
        common.add_argument(f"--{dotted}", dest=dotted, metavar="V", help=argparse.SUPPRESS)

    parser = _Parser(prog="nidseq", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.add_parser("ingest", parents=[common], help="parse a capture or JSONL into flows")
    sub.add_parser("synth", parents=[common], help="generate labeled synthetic flows")
    sub.add_parser("train-ae", parents=[common], help="train the payload autoencoder")
    sub.add_parser("encode", parents=[common], help="embed every packet payload")
    sub.add_parser("sample", parents=[common], help="split flows and simulate trajectories")
    p_train = sub.add_parser("train", parents=[common], help="train a model")
    p_train.add_argument("model", choices=MODEL_NAMES)
    p_eval = sub.add_parser("evaluate", parents=[common], help="score a model on held-out flows")
    p_eval.add_argument("model", choices=MODEL_NAMES)
    p_report = sub.add_parser("report", parents=[common], help="render the combined table")
    p_report.add_argument("--svg", action="store_true", help="also write a bar chart")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
    except _UsageError as exc:
        print(f"nidseq: error: {exc}", file=sys.stderr)
        return 1
    overrides = {
        dotted: value
        for dotted, _ in config.dotted_fields()
        if (value := vars(args).get(dotted)) is not None
    }
    try:
        cfg = config.load_config(args.config)
        try:
            # A malformed flag value is a usage problem, not a data problem.
            cfg = config.apply_overrides(cfg, overrides)
        except ValueError as exc:
            print(f"nidseq: error: {exc}", file=sys.stderr)
            return 1
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "train-ae":
            return cmd_train_ae(cfg)
        if args.command == "encode":
            return cmd_encode(cfg)
        if args.command == "sample":
            return cmd_sample(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.model)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.model)
        if args.command == "report":
            return cmd_report(cfg, args.svg)
        raise AssertionError(f"unhandled command {args.command}")
    except (NidseqError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"nidseq: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
