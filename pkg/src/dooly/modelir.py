"""Declarative model / backend / hardware / workload descriptions.

These are the corpus inputs consumed by the tracer, profiler, and simulator.
Manifests are JSON documents (schema_version 1); loading validates every
structural invariant and reports violations with a field path.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ParseError, ValidationError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MoESpec:
    num_experts: int
    top_k: int
    expert_intermediate: int


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description; layer_attention holds one entry per layer,
    None for full attention or the window size in tokens for sliding-window."""

    name: str
    hidden_dim: int
    num_layers: int
    num_q_heads: int
    num_kv_heads: int
    head_dim: int
    intermediate_size: int
    vocab_size: int
    dtype_bytes: int
    max_context: int
    layer_attention: tuple[Optional[int], ...]
    moe: Optional[MoESpec] = None

    def validate(self, path: str = "model") -> None:
        for fname in (
            "hidden_dim",
            "num_layers",
            "num_q_heads",
            "num_kv_heads",
            "head_dim",
            "intermediate_size",
            "vocab_size",
            "dtype_bytes",
            "max_context",
        ):
            if getattr(self, fname) < 1:
                raise ValidationError(f"{path}.{fname}", "must be a positive integer")
        if self.num_q_heads % self.num_kv_heads != 0:
            raise ValidationError(
                f"{path}.num_kv_heads",
                f"num_q_heads ({self.num_q_heads}) not divisible by num_kv_heads "
                f"({self.num_kv_heads})",
            )
        expected = self.num_q_heads * self.head_dim
        if self.hidden_dim != expected:
            raise ValidationError(
                f"{path}.hidden_dim",
                f"{self.hidden_dim} != num_q_heads*head_dim ({expected})",
            )
        if len(self.layer_attention) != self.num_layers:
            raise ValidationError(
                f"{path}.layer_attention",
                f"length {len(self.layer_attention)} != num_layers {self.num_layers}",
            )
        for i, window in enumerate(self.layer_attention):
            if window is not None and window < 1:
                raise ValidationError(f"{path}.layer_attention[{i}]", "window must be >= 1")
        if self.moe is not None:
            if self.moe.num_experts < 2:
                raise ValidationError(f"{path}.moe.num_experts", "must be >= 2")
            if not (1 <= self.moe.top_k <= self.moe.num_experts):
                raise ValidationError(f"{path}.moe.top_k", "must be in [1, num_experts]")
            if self.moe.expert_intermediate < 1:
                raise ValidationError(f"{path}.moe.expert_intermediate", "must be >= 1")


def geometry_key(cfg: ModelConfig, layer: int) -> str:
    """Canonical attention-geometry string for one layer."""
    if layer >= cfg.num_layers:
        raise ValueError(f"layer {layer} out of range for {cfg.name}")
    window = cfg.layer_attention[layer]
    suffix = "full" if window is None else f"swa{window}"
    return f"q{cfg.num_q_heads}/kv{cfg.num_kv_heads}/d{cfg.head_dim}/{suffix}"


@dataclass(frozen=True)
class BackendSpec:
    """Attention backend: a kernel-symbol naming rule plus cost multipliers.

    The kernel table is generative: for any attention geometry and phase the
    backend emits a fixed ordered symbol tuple, so the every-geometry/both-
    phases coverage invariant holds by construction.  Multipliers are keyed
    by symbol prefix; unlisted symbols cost 1.0.
    """

    name: str
    prefix: str
    cost_multiplier: tuple[tuple[str, float], ...]

    def validate(self, path: str = "backend") -> None:
        if not self.name or not self.prefix:
            raise ValidationError(f"{path}.name", "name and prefix must be non-empty")
        for key, value in self.cost_multiplier:
            if value <= 0:
                raise ValidationError(
                    f"{path}.cost_multiplier[{key}]", "multipliers must be positive"
                )

    def attention_kernels(
        self, q_heads: int, kv_heads: int, head_dim: int, window: Optional[int], phase: str
    ) -> tuple[str, ...]:
        geom = f"q{q_heads}kv{kv_heads}d{head_dim}" + (
            "full" if window is None else f"w{window}"
        )
        return (
            f"{self.prefix}_cache_write_kv{kv_heads}d{head_dim}",
            f"{self.prefix}_{phase}_attn_{geom}",
            f"{self.prefix}_batch_reduce",
        )

    def multiplier(self, symbols: tuple[str, ...]) -> float:
        product = 1.0
        for symbol in symbols:
            best = 1.0
            best_len = -1
            for key, value in self.cost_multiplier:
                if symbol.startswith(key) and len(key) > best_len:
                    best, best_len = value, len(key)
            product *= best
        return product


@dataclass(frozen=True)
class HardwareSpec:
    name: str
    peak_flops: float
    mem_bw: float
    comm_alpha: float
    comm_beta: float
    topology: str
    memory_capacity: float

    def validate(self, path: str = "hardware") -> None:
        for fname in ("peak_flops", "mem_bw", "comm_alpha", "comm_beta", "memory_capacity"):
            if getattr(self, fname) <= 0:
                raise ValidationError(f"{path}.{fname}", "must be positive")


@dataclass(frozen=True)
class SweepGrid:
    token_counts: tuple[int, ...]
    request_counts: tuple[int, ...]
    kv_lens: tuple[int, ...]
    prefill_chunk: int
    max_batch: int

    def validate(self, path: str, max_context: int) -> None:
        for fname in ("token_counts", "request_counts", "kv_lens"):
            values = getattr(self, fname)
            if not values:
                raise ValidationError(f"{path}.{fname}", "must be non-empty")
            if any(v < 0 for v in values):
                raise ValidationError(f"{path}.{fname}", "entries must be >= 0")
        if any(v < 1 for v in self.token_counts + self.request_counts):
            raise ValidationError(f"{path}", "token/request counts must be >= 1")
        if self.prefill_chunk < 1 or self.max_batch < 1:
            raise ValidationError(f"{path}", "prefill_chunk and max_batch must be >= 1")
        too_big = [v for v in self.token_counts + self.kv_lens if v > max_context]
        if too_big:
            raise ValidationError(
                f"{path}", f"grid values {too_big} exceed corpus max_context {max_context}"
            )

    def shrink(self, factor: int) -> "SweepGrid":
        """Thinned grid for CI runs: keeps endpoints, drops interior points."""

        def thin(values: tuple[int, ...]) -> tuple[int, ...]:
            if len(values) <= 2:
                return values
            kept = values[:: max(1, factor)]
            if values[-1] not in kept:
                kept = kept + (values[-1],)
            return kept

        return SweepGrid(
            token_counts=thin(self.token_counts),
            request_counts=thin(self.request_counts),
            kv_lens=thin(self.kv_lens),
            prefill_chunk=self.prefill_chunk,
            max_batch=self.max_batch,
        )


DEFAULT_GRID = SweepGrid(
    token_counts=(1, 16, 128, 512, 2048, 8192, 32768),
    request_counts=(1, 8, 64, 256),
    kv_lens=(0, 512, 4096, 16384),
    prefill_chunk=32768,
    max_batch=256,
)


@dataclass(frozen=True)
class CorpusManifest:
    models: tuple[ModelConfig, ...]
    backends: tuple[BackendSpec, ...]
    hardware: HardwareSpec
    tp_degree: int
    grid: SweepGrid

    def validate(self) -> None:
        if not self.models:
            raise ValidationError("models", "must be non-empty")
        if not self.backends:
            raise ValidationError("backends", "must be non-empty")
        if self.tp_degree < 1:
            raise ValidationError("tp_degree", "must be >= 1")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ValidationError("models", "duplicate model names")
        for i, model in enumerate(self.models):
            model.validate(f"models[{i}]")
            if self.tp_degree > 1:
                if model.num_kv_heads % self.tp_degree != 0:
                    raise ValidationError(
                        f"models[{i}]", f"kv heads not divisible by tp={self.tp_degree}"
                    )
        for i, backend in enumerate(self.backends):
            backend.validate(f"backends[{i}]")
        self.hardware.validate("hardware")
        # Sweeps cap token/kv values at each model's own max_context; the grid
        # only needs to fit the largest model in the corpus.
        self.grid.validate("grid", max(m.max_context for m in self.models))

    def model(self, name: str) -> ModelConfig:
        for m in self.models:
            if m.name == name:
                return m
        raise KeyError(name)

    def backend(self, name: str) -> BackendSpec:
        for b in self.backends:
            if b.name == name:
                return b
        raise KeyError(name)


# --- JSON (de)serialization ---------------------------------------------------


def _layer_attention_from_json(raw: Any, num_layers: int, path: str) -> tuple[Optional[int], ...]:
    if raw == "full":
        return (None,) * num_layers
    if isinstance(raw, dict):
        # Shorthand for interleaved sliding-window stacks: every layer uses
        # the window except layers at full_residue modulo period.
        try:
            window, period, full_residue = raw["window"], raw["period"], raw["full_residue"]
        except KeyError as exc:
            raise ValidationError(path, f"missing key {exc}") from exc
        return tuple(
            None if (i % period) == full_residue else window for i in range(num_layers)
        )
    if isinstance(raw, list):
        out: list[Optional[int]] = []
        for i, entry in enumerate(raw):
            if entry == "full":
                out.append(None)
            elif isinstance(entry, int):
                out.append(entry)
            else:
                raise ValidationError(f"{path}[{i}]", f"expected 'full' or int, got {entry!r}")
        return tuple(out)
    raise ValidationError(path, f"unrecognized layer_attention form: {raw!r}")


def _layer_attention_to_json(layers: tuple[Optional[int], ...]) -> Any:
    if all(w is None for w in layers):
        return "full"
    return ["full" if w is None else w for w in layers]


def model_from_json(raw: dict, path: str = "model") -> ModelConfig:
    try:
        moe_raw = raw.get("moe")
        moe = (
            MoESpec(
                num_experts=moe_raw["num_experts"],
                top_k=moe_raw["top_k"],
                expert_intermediate=moe_raw["expert_intermediate"],
            )
            if moe_raw
            else None
        )
        cfg = ModelConfig(
            name=raw["name"],
            hidden_dim=raw["hidden_dim"],
            num_layers=raw["num_layers"],
            num_q_heads=raw["num_q_heads"],
            num_kv_heads=raw["num_kv_heads"],
            head_dim=raw["head_dim"],
            intermediate_size=raw["intermediate_size"],
            vocab_size=raw["vocab_size"],
            dtype_bytes=raw.get("dtype_bytes", 2),
            max_context=raw["max_context"],
            layer_attention=_layer_attention_from_json(
                raw.get("layer_attention", "full"), raw["num_layers"], f"{path}.layer_attention"
            ),
            moe=moe,
        )
    except KeyError as exc:
        raise ValidationError(path, f"missing field {exc}") from exc
    return cfg


def model_to_json(cfg: ModelConfig) -> dict:
    out: dict[str, Any] = {
        "name": cfg.name,
        "hidden_dim": cfg.hidden_dim,
        "num_layers": cfg.num_layers,
        "num_q_heads": cfg.num_q_heads,
        "num_kv_heads": cfg.num_kv_heads,
        "head_dim": cfg.head_dim,
        "intermediate_size": cfg.intermediate_size,
        "vocab_size": cfg.vocab_size,
        "dtype_bytes": cfg.dtype_bytes,
        "max_context": cfg.max_context,
        "layer_attention": _layer_attention_to_json(cfg.layer_attention),
    }
    if cfg.moe is not None:
        out["moe"] = {
            "num_experts": cfg.moe.num_experts,
            "top_k": cfg.moe.top_k,
            "expert_intermediate": cfg.moe.expert_intermediate,
        }
    return out


def manifest_from_json(raw: dict) -> CorpusManifest:
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError("schema_version", f"expected {SCHEMA_VERSION}, got {version}")
    models = tuple(
        model_from_json(m, f"models[{i}]") for i, m in enumerate(raw.get("models", []))
    )
    backends = tuple(
        BackendSpec(
            name=b["name"],
            prefix=b["prefix"],
            cost_multiplier=tuple(sorted((k, float(v)) for k, v in b.get("cost_multiplier", {}).items())),
        )
        for b in raw.get("backends", [])
    )
    hw_raw = raw.get("hardware")
    if not isinstance(hw_raw, dict):
        raise ValidationError("hardware", "missing hardware section")
    hardware = HardwareSpec(
        name=hw_raw["name"],
        peak_flops=float(hw_raw["peak_flops"]),
        mem_bw=float(hw_raw["mem_bw"]),
        comm_alpha=float(hw_raw["comm_alpha"]),
        comm_beta=float(hw_raw["comm_beta"]),
        topology=hw_raw["topology"],
        memory_capacity=float(hw_raw["memory_capacity"]),
    )
    grid_raw = raw.get("grid", {})
    grid = SweepGrid(
        token_counts=tuple(grid_raw.get("token_counts", DEFAULT_GRID.token_counts)),
        request_counts=tuple(grid_raw.get("request_counts", DEFAULT_GRID.request_counts)),
        kv_lens=tuple(grid_raw.get("kv_lens", DEFAULT_GRID.kv_lens)),
        prefill_chunk=grid_raw.get("prefill_chunk", DEFAULT_GRID.prefill_chunk),
        max_batch=grid_raw.get("max_batch", DEFAULT_GRID.max_batch),
    )
    manifest = CorpusManifest(
        models=models,
        backends=backends,
        hardware=hardware,
        tp_degree=raw.get("tp_degree", 1),
        grid=grid,
    )
    manifest.validate()
    return manifest


def manifest_to_json(manifest: CorpusManifest) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "models": [model_to_json(m) for m in manifest.models],
        "backends": [
            {
                "name": b.name,
                "prefix": b.prefix,
                "cost_multiplier": {k: v for k, v in b.cost_multiplier},
            }
            for b in manifest.backends
        ],
        "hardware": {
            "name": manifest.hardware.name,
            "peak_flops": manifest.hardware.peak_flops,
            "mem_bw": manifest.hardware.mem_bw,
            "comm_alpha": manifest.hardware.comm_alpha,
            "comm_beta": manifest.hardware.comm_beta,
            "topology": manifest.hardware.topology,
            "memory_capacity": manifest.hardware.memory_capacity,
        },
        "tp_degree": manifest.tp_degree,
        "grid": {
            "token_counts": list(manifest.grid.token_counts),
            "request_counts": list(manifest.grid.request_counts),
            "kv_lens": list(manifest.grid.kv_lens),
            "prefill_chunk": manifest.grid.prefill_chunk,
            "max_batch": manifest.grid.max_batch,
        },
    }


def dumps_canonical(document: dict) -> str:
    """Canonical JSON text: sorted keys, tight separators, trailing newline."""
    return json.dumps(document, sort_keys=True, separators=(",", ":")) + "\n"


def load_manifest(path: str | Path) -> CorpusManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: expected a JSON object at top level")
    return manifest_from_json(raw)


def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    Path(path).write_text(dumps_canonical(manifest_to_json(manifest)))


def builtin_manifest_path(name: str) -> Path:
    """Path of a manifest shipped inside the package (e.g. 'corpus12')."""
    here = Path(__file__).parent / "data" / f"{name}.json"
    if not here.exists():
        raise FileNotFoundError(f"no builtin manifest named {name!r}")
    return here


# --- workloads ----------------------------------------------------------------


@dataclass(frozen=True)
class Request:
    arrival_s: float
    prompt_tokens: int
    output_tokens: int
    cached_tokens: int = 0


@dataclass(frozen=True)
class LengthDist:
    """Log-normal parameterized by its median and mean (two published moments
    pin both parameters: mu = ln(median), sigma = sqrt(2 ln(mean/median)))."""

    median: int
    mean: float

    def validate(self, path: str) -> None:
        if self.median < 1:
            raise ValidationError(f"{path}.median", "must be >= 1")
        if self.mean < self.median:
            raise ValidationError(f"{path}.mean", "log-normal requires mean >= median")

    def sample(self, rng: random.Random, cap: int) -> int:
        mu = math.log(self.median)
        sigma = math.sqrt(max(0.0, 2.0 * math.log(self.mean / self.median)))
        value = int(round(rng.lognormvariate(mu, sigma))) if sigma > 0 else self.median
        return max(1, min(value, cap))


@dataclass(frozen=True)
class WorkloadSpec:
    mode: str  # "stream" | "single_batch"
    # stream fields
    rate: float = 0.0
    arrival: str = "poisson"  # "poisson" | "trace_file"
    trace_path: Optional[str] = None
    prompt_len: Optional[LengthDist] = None
    output_len: Optional[LengthDist] = None
    duration_s: Optional[float] = None
    num_requests: Optional[int] = None
    # single_batch fields
    kind: str = "prefill_heavy"  # "prefill_heavy" | "decode_heavy"
    total_tokens: int = 0
    batch_size: int = 0
    cached_context: int = 0
    max_len: int = 1 << 20

    def validate(self) -> None:
        if self.mode == "stream":
            if self.arrival == "poisson":
                if self.rate <= 0:
                    raise ValidationError("workload.rate", "must be positive")
                if self.duration_s is None and self.num_requests is None:
                    raise ValidationError(
                        "workload", "stream needs duration_s or num_requests"
                    )
                if self.prompt_len is None or self.output_len is None:
                    raise ValidationError("workload", "stream needs length distributions")
                self.prompt_len.validate("workload.prompt_len")
                self.output_len.validate("workload.output_len")
            elif self.arrival == "trace_file":
                if not self.trace_path:
                    raise ValidationError("workload.trace_path", "required for trace_file")
            else:
                raise ValidationError("workload.arrival", f"unknown mode {self.arrival!r}")
        elif self.mode == "single_batch":
            if self.kind not in ("prefill_heavy", "decode_heavy"):
                raise ValidationError("workload.kind", f"unknown kind {self.kind!r}")
            if self.batch_size < 1:
                raise ValidationError("workload.batch_size", "must be >= 1")
            if self.kind == "prefill_heavy" and self.total_tokens < self.batch_size:
                raise ValidationError("workload.total_tokens", "must be >= batch_size")
            if self.kind == "decode_heavy" and self.cached_context < 1:
                raise ValidationError("workload.cached_context", "must be >= 1")
        else:
            raise ValidationError("workload.mode", f"unknown mode {self.mode!r}")


def workload_from_json(raw: dict) -> WorkloadSpec:
    def dist(key: str) -> Optional[LengthDist]:
        entry = raw.get(key)
        if entry is None:
            return None
        return LengthDist(median=entry["median"], mean=float(entry["mean"]))

    spec = WorkloadSpec(
        mode=raw.get("mode", "stream"),
        rate=float(raw.get("rate", 0.0)),
        arrival=raw.get("arrival", "poisson"),
        trace_path=raw.get("trace_path"),
        prompt_len=dist("prompt_len"),
        output_len=dist("output_len"),
        duration_s=raw.get("duration_s"),
        num_requests=raw.get("num_requests"),
        kind=raw.get("kind", "prefill_heavy"),
        total_tokens=raw.get("total_tokens", 0),
        batch_size=raw.get("batch_size", 0),
        cached_context=raw.get("cached_context", 0),
        max_len=raw.get("max_len", 1 << 20),
    )
    spec.validate()
    return spec


def load_workload(path: str | Path) -> WorkloadSpec:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path} is not valid JSON: {exc}") from exc
    return workload_from_json(raw)


def sample_workload(spec: WorkloadSpec, seed: int) -> list[Request]:
    """Deterministic request list for a workload spec.

    Poisson streams draw exponential inter-arrival gaps; single-batch modes
    emit all requests at t=0 (prefill_heavy splits the token budget evenly,
    decode_heavy gives each request a pre-cached context and one new token).
    """
    spec.validate()
    rng = random.Random(seed)
    if spec.mode == "single_batch":
        if spec.kind == "prefill_heavy":
            per = spec.total_tokens // spec.batch_size
            return [
                Request(arrival_s=0.0, prompt_tokens=per, output_tokens=1)
                for _ in range(spec.batch_size)
            ]
        return [
            Request(
                arrival_s=0.0,
                prompt_tokens=spec.cached_context,
                output_tokens=1,
                cached_tokens=spec.cached_context,
            )
            for _ in range(spec.batch_size)
        ]
    if spec.arrival == "trace_file":
        requests = []
        for i, line in enumerate(Path(spec.trace_path).read_text().splitlines()):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                requests.append(
                    Request(
                        arrival_s=float(rec["arrival_s"]),
                        prompt_tokens=int(rec["prompt_tokens"]),
                        output_tokens=int(rec["output_tokens"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ParseError(f"{spec.trace_path}:{i + 1}: bad record ({exc})") from exc
        return sorted(requests, key=lambda r: r.arrival_s)

    requests = []
    clock = 0.0
    count = 0
    while True:
        clock += rng.expovariate(spec.rate)
        if spec.duration_s is not None and clock > spec.duration_s:
            break
        if spec.num_requests is not None and count >= spec.num_requests:
            break
        requests.append(
            Request(
                arrival_s=clock,
                prompt_tokens=spec.prompt_len.sample(rng, spec.max_len),
                output_tokens=spec.output_len.sample(rng, spec.max_len),
            )
        )
        count += 1
        if spec.duration_s is None and count >= (spec.num_requests or 0):
            break
    return requests
