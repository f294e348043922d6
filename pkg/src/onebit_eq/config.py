"""Declarative experiment configuration: parsing, validation, round-trip.

Configs are YAML (JSON is a subset) with explicit unit suffixes (_db, _ns).
A results manifest embeds the fully resolved config under config_echo, so a
manifest file can be fed back in place of the original config to reproduce
a run bit-exactly.
"""

from dataclasses import asdict

import yaml

from .equalizers import INITIALIZERS, EmPolicy
from .harness import (
    EQUALIZER_KINDS,
    EqualizerSpec,
    ExperimentConfig,
    SystemConfig,
)

SCHEMA_VERSION = 1

_POLICY_DEFAULTS = {"max_iterations": 1000, "rel_tolerance": 1e-3,
                    "initializer": "wf_quantized"}

_COMPLEXITY_DEFAULTS = {"block_length_grid": None, "overlap_factor": 2,
                        "iterations": 8, "model": "mismatched"}


def _is_power_of_two(n):
    return isinstance(n, int) and n > 0 and (n & (n - 1)) == 0


def load_document(path):
    """Read a YAML/JSON config or manifest file into a plain dict."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    if "config_echo" in doc:  # manifest re-run
        doc = doc["config_echo"]
    return doc


def validate_config(doc):
    """Return a machine-readable list of {field, message} problems."""
    errors = []

    def err(field, message):
        errors.append({"field": field, "message": message})

    system = doc.get("system")
    if not isinstance(system, dict):
        err("system", "missing or not a mapping")
        system = {}

    def need_int(field, value, minimum):
        if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
            err(field, f"must be an integer >= {minimum}")
            return None
        return value

    n_users = need_int("system.n_users", system.get("n_users"), 1)
    need_int("system.n_antennas", system.get("n_antennas"), 1)
    order = need_int("system.channel_order", system.get("channel_order"), 0)
    coherence = need_int("system.coherence_time", system.get("coherence_time"), 1)

    noise_var = system.get("noise_var", 1.0)
    if not isinstance(noise_var, (int, float)) or noise_var <= 0:
        err("system.noise_var", "must be a positive number")
    period = system.get("sample_period_ns")
    if period is not None and (not isinstance(period, (int, float)) or period <= 0):
        err("system.sample_period_ns", "must be a positive number or null")

    grid = doc.get("eb_n0_grid_db")
    if not isinstance(grid, list) or len(grid) == 0 or not all(
        isinstance(v, (int, float)) for v in grid
    ):
        err("eb_n0_grid_db", "must be a nonempty list of numbers")

    need_int("n_realizations", doc.get("n_realizations"), 1)
    need_int("seed", doc.get("seed", 0), 0)

    eqs = doc.get("equalizers")
    if not isinstance(eqs, list) or len(eqs) == 0:
        err("equalizers", "must be a nonempty list")
        eqs = []
    for i, eq in enumerate(eqs):
        prefix = f"equalizers[{i}]"
        if not isinstance(eq, dict):
            err(prefix, "must be a mapping")
            continue
        kind = eq.get("kind")
        if kind not in EQUALIZER_KINDS:
            err(f"{prefix}.kind", f"must be one of {list(EQUALIZER_KINDS)}")
        nb = eq.get("block_length")
        if not _is_power_of_two(nb):
            err(f"{prefix}.block_length", "must be a power of two")
        else:
            if order is not None and nb <= order:
                err(f"{prefix}.block_length",
                    f"must exceed the channel order ({order})")
            if coherence is not None and nb > coherence:
                err(f"{prefix}.block_length",
                    "must not exceed system.coherence_time")
        overlap = eq.get("overlap", 0)
        if not isinstance(overlap, int) or isinstance(overlap, bool) or overlap < 0:
            err(f"{prefix}.overlap", "must be a nonnegative integer")
        elif isinstance(nb, int) and overlap >= nb:
            err(f"{prefix}.overlap", "must be smaller than block_length")
        policy = eq.get("policy", {})
        if not isinstance(policy, dict):
            err(f"{prefix}.policy", "must be a mapping")
            policy = {}
        it = policy.get("max_iterations", _POLICY_DEFAULTS["max_iterations"])
        if not isinstance(it, int) or isinstance(it, bool) or it < 1:
            err(f"{prefix}.policy.max_iterations", "must be an integer >= 1")
        tol = policy.get("rel_tolerance", _POLICY_DEFAULTS["rel_tolerance"])
        if not isinstance(tol, (int, float)) or tol < 0:
            err(f"{prefix}.policy.rel_tolerance", "must be a number >= 0")
        initializer = policy.get("initializer", _POLICY_DEFAULTS["initializer"])
        if initializer not in INITIALIZERS:
            err(f"{prefix}.policy.initializer",
                f"must be one of {list(INITIALIZERS)}")

    if not isinstance(doc.get("unquantized_bypass", False), bool):
        err("unquantized_bypass", "must be a boolean")

    comp = doc.get("complexity", {})
    if comp and isinstance(comp, dict):
        grid = comp.get("block_length_grid")
        if grid is not None and (
            not isinstance(grid, list) or not all(_is_power_of_two(v) for v in grid)
        ):
            err("complexity.block_length_grid", "must be a list of powers of two")
    elif comp:
        err("complexity", "must be a mapping")

    return errors


def resolve_config(doc):
    """Build the runtime ExperimentConfig from a validated document."""
    system = doc["system"]
    sys_cfg = SystemConfig(
        n_users=int(system["n_users"]),
        n_antennas=int(system["n_antennas"]),
        channel_order=int(system["channel_order"]),
        coherence_time=int(system["coherence_time"]),
        noise_var=float(system.get("noise_var", 1.0)),
        sample_period_ns=system.get("sample_period_ns"),
    )
    specs = []
    for eq in doc["equalizers"]:
        policy_doc = dict(_POLICY_DEFAULTS)
        policy_doc.update(eq.get("policy", {}))
        specs.append(
            EqualizerSpec(
                kind=eq["kind"],
                block_length=int(eq["block_length"]),
                overlap=int(eq.get("overlap", 0)),
                policy=EmPolicy(
                    max_iterations=int(policy_doc["max_iterations"]),
                    rel_tolerance=float(policy_doc["rel_tolerance"]),
                    initializer=policy_doc["initializer"],
                ),
                label=eq.get("label", ""),
            )
        )
    return ExperimentConfig(
        system=sys_cfg,
        equalizers=tuple(specs),
        eb_n0_grid_db=tuple(float(v) for v in doc["eb_n0_grid_db"]),
        n_realizations=int(doc["n_realizations"]),
        seed=int(doc.get("seed", 0)),
        unquantized_bypass=bool(doc.get("unquantized_bypass", False)),
    )


def complexity_options(doc, system):
    """Resolve the complexity-table options with defaults from the system."""
    comp = dict(_COMPLEXITY_DEFAULTS)
    comp.update(doc.get("complexity", {}) or {})
    if comp["block_length_grid"] is None:
        order = system["channel_order"]
        start = 1
        while start <= order:
            start *= 2
        comp["block_length_grid"] = [start * (2 ** i) for i in range(5)]
    return comp


def config_to_dict(cfg):
    """Serialize an ExperimentConfig back to the document form."""
    doc = {
        "system": {
            "n_users": cfg.system.n_users,
            "n_antennas": cfg.system.n_antennas,
            "channel_order": cfg.system.channel_order,
            "coherence_time": cfg.system.coherence_time,
            "noise_var": cfg.system.noise_var,
            "sample_period_ns": cfg.system.sample_period_ns,
        },
        "eb_n0_grid_db": list(cfg.eb_n0_grid_db),
        "n_realizations": cfg.n_realizations,
        "seed": cfg.seed,
        "unquantized_bypass": cfg.unquantized_bypass,
        "equalizers": [
            {
                "kind": spec.kind,
                "block_length": spec.block_length,
                "overlap": spec.overlap,
                "label": spec.label,
                "policy": asdict(spec.policy),
            }
            for spec in cfg.equalizers
        ],
    }
    return doc


def dump_config(doc):
    return yaml.safe_dump(doc, sort_keys=True)
