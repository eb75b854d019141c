import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import pandas as pd
from django.conf import settings
from tqdm import tqdm

from mwnc_app.analysis import AnalysisError, NumericError, analyze_record
from mwnc_app.codec import CodecError
from mwnc_app.coopsched import PlanningError, Topology, equivalent_capacity, select_relays
from mwnc_app.simulator import (
    CSV_COLUMNS, WINDOW_PROTOCOLS, ConfigError, Metrics, SimConfig, SimulationError, build_topology, run,
)

logger = logging.getLogger(__name__)


class ExperimentInputError(Exception):
    pass


class ExperimentNumericError(Exception):
    pass


def first_error(errors) -> str:
    """
    Flattens DRF's nested error dict into one readable line.
    """
    if isinstance(errors, dict):
        field, detail = next(iter(errors.items()))
        inner = first_error(detail)
        return inner if field == "non_field_errors" else f"{field}: {inner}"
    if isinstance(errors, (list, tuple)) and errors:
        return first_error(errors[0])
    return str(errors)


def load_json(path) -> dict:
    """
    Reads a JSON object from disk; parse failures carry line and column.
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ExperimentInputError(f"Cannot read {path}: {e.strerror or e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ExperimentInputError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
    if not isinstance(data, dict):
        raise ExperimentInputError(f"{path}: expected a JSON object at the top level.")
    return data


def dump_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_text(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)


def plan_payload(topology: Topology, delta: float) -> dict:
    """
    Runs the relay planner and returns the plan as a JSON-ready dict,
    including each node's equivalent capacity under the plan.
    """
    try:
        capacity, plan = select_relays(topology, delta)
    except PlanningError as e:
        raise ExperimentInputError(str(e))
    if capacity <= 0:
        raise ExperimentInputError("Infeasible: some node cannot be reached at any positive rate.")
    payload = plan.to_dict()
    payload.update({
        "capacity": capacity,
        "K": topology.K,
        "delta": delta,
        "equivalent_capacity": {str(node): c for node, c in equivalent_capacity(plan, topology).items()},
    })
    return payload


def _finite(value):
    """Non-finite floats (theta0 on a perfect channel) become null in JSON."""
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def analyze_payload(c_hat: float, v: float, w: int) -> dict:
    try:
        return _finite(analyze_record(c_hat, v, w))
    except NumericError as e:
        raise ExperimentNumericError(str(e))
    except AnalysisError as e:
        raise ExperimentInputError(str(e))


def simulate(config: SimConfig) -> Metrics:
    try:
        return run(config)
    except SimulationError as e:
        raise ExperimentNumericError(str(e))
    except (PlanningError, ConfigError, CodecError) as e:
        raise ExperimentInputError(str(e))


def simulate_payload(config: SimConfig) -> dict:
    return simulate(config).to_dict()


def run_configs(configs: Sequence[SimConfig], threads: Optional[int] = None, progress: bool = False) -> List[Metrics]:
    """
    Runs every config on a thread pool; results keep the order of ``configs``.
    """
    threads = max(1, threads or settings.MWNC["THREADS"])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results: Iterable[Metrics] = pool.map(simulate, configs)
        if progress:
            results = tqdm(results, total=len(configs), desc="runs", unit="run")
        return list(results)


def _networks(data: dict, K: int) -> List[Tuple[int, Topology]]:
    if data.get("topology") is not None:
        topology = data["topology"].with_k(K)
        return [(topology.n, topology)]
    networks = []
    for n in data["grid_n"]:
        spec = {"n": n, "radius": data["radius"], "d0": data["d0"], "alpha": data["alpha"],
                "seed": data["seed"], "K": K}
        try:
            networks.append((n, build_topology(spec)))
        except PlanningError as e:
            raise ExperimentInputError(str(e))
    return networks


def _config(data: dict, topology: Topology, protocol: str, **overrides) -> SimConfig:
    try:
        return SimConfig(
            topology=topology,
            protocol=protocol,
            W=overrides.get("W", data["w"]),
            V=overrides.get("V"),
            rho=overrides.get("rho"),
            block_size=data["block_size"],
            slots=data["slots"],
            seed=data["seed"],
            warmup_fraction=settings.MWNC["WARMUP_FRACTION"],
            delta=data["delta"],
        )
    except ConfigError as e:
        raise ExperimentInputError(str(e))


def sweep_configs(data: dict) -> List[SimConfig]:
    """
    Grid of runs in index order: network, protocol, W, rho. With a fixed v the
    rho axis collapses to that one speed. Block baselines do not depend on W
    or the load and get one run per network.
    """
    configs = []
    for _, topology in _networks(data, data["K"]):
        for protocol in data["protocols"]:
            if protocol not in WINDOW_PROTOCOLS:
                configs.append(_config(data, topology, protocol))
                continue
            for w in data["grid_w"]:
                if data.get("v") is not None:
                    configs.append(_config(data, topology, protocol, W=w, V=data["v"]))
                    continue
                for rho in data["grid_rho"]:
                    configs.append(_config(data, topology, protocol, W=w, rho=rho))
    if not configs:
        raise ExperimentInputError("The sweep grid is empty.")
    return configs


def compare_configs(data: dict) -> List[SimConfig]:
    configs = []
    for K in data["grid_k"]:
        for _, topology in _networks(data, K):
            for protocol in data["protocols"]:
                if protocol in WINDOW_PROTOCOLS:
                    configs.append(_config(data, topology, protocol, V=data.get("v"), rho=data["rho"]))
                else:
                    configs.append(_config(data, topology, protocol))
    if not configs:
        raise ExperimentInputError("The comparison grid is empty.")
    return configs


def metrics_frame(metrics: Sequence[Metrics]) -> pd.DataFrame:
    return pd.DataFrame([m.to_row() for m in metrics], columns=list(CSV_COLUMNS))


def frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n")


def compare_summary(frame: pd.DataFrame, protocols: Sequence[str]) -> dict:
    """
    Per-protocol means over the grid, plus the throughput and delay of the
    first protocol relative to each of the others.
    """
    means = frame.groupby("protocol", sort=False)[["throughput_mean", "delay_mean", "ops_per_packet"]].mean()
    summary = {"protocols": {}, "gains": {}}
    for protocol in protocols:
        if protocol not in means.index:
            continue
        row = means.loc[protocol]
        summary["protocols"][protocol] = {
            "throughput_mean": float(row["throughput_mean"]),
            "delay_mean": float(row["delay_mean"]),
            "ops_per_packet": float(row["ops_per_packet"]),
        }
    if protocols and protocols[0] in summary["protocols"]:
        lead = summary["protocols"][protocols[0]]
        for other in protocols[1:]:
            ref = summary["protocols"].get(other)
            if not ref:
                continue
            summary["gains"][f"{protocols[0]}_vs_{other}"] = {
                "throughput": lead["throughput_mean"] / ref["throughput_mean"] - 1.0 if ref["throughput_mean"] else None,
                "delay_ratio": lead["delay_mean"] / ref["delay_mean"] if ref["delay_mean"] else None,
            }
    return summary


def run_sweep(data: dict, progress: bool = False) -> pd.DataFrame:
    configs = sweep_configs(data)
    logger.info("Sweep: %d run(s)", len(configs))
    return metrics_frame(run_configs(configs, progress=progress))


def run_compare(data: dict, progress: bool = False) -> Tuple[pd.DataFrame, dict]:
    configs = compare_configs(data)
    logger.info("Compare: %d run(s)", len(configs))
    frame = metrics_frame(run_configs(configs, progress=progress))
    return frame, compare_summary(frame, data["protocols"])
