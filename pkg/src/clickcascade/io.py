"""File formats: packages CSV, experiment config, round logs, results, manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidInputError, RecordError
from .sim import DecisionModel, ReplicaResult, SimConfig
from .textfeat import PackageRecord

log = logging.getLogger(__name__)

PACKAGE_COLUMNS = ["test_id", "headline", "lede", "impressions", "clicks"]
ROUND_LOG_COLUMNS = ["replica", "round", "arm", "genotype", "impressions", "clicks", "ctr", "decision"]
CONFIG_SCHEMA_VERSION = 1


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: str | Path, data) -> None:
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def load_packages_csv(path: str | Path) -> list[PackageRecord]:
    """Parse ``test_id,headline,lede,impressions,clicks``.

    Every bad row is collected (with its line number) and reported together
    in one :class:`RecordError` after the whole file is read.
    """
    path = Path(path)
    records: list[PackageRecord] = []
    problems: list[tuple[int, str]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PACKAGE_COLUMNS:
            raise RecordError([(1, f"header must be {','.join(PACKAGE_COLUMNS)}, got {header}")])
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(PACKAGE_COLUMNS):
                problems.append((lineno, f"expected {len(PACKAGE_COLUMNS)} fields, got {len(row)}"))
                continue
            test_id, headline, lede, imp, clk = row
            try:
                impressions, clicks = int(imp), int(clk)
            except ValueError:
                problems.append((lineno, f"unparseable counts impressions={imp!r} clicks={clk!r}"))
                continue
            if clicks > impressions:
                problems.append((lineno, f"clicks ({clicks}) > impressions ({impressions})"))
                continue
            try:
                records.append(PackageRecord(test_id, headline, lede or None, impressions, clicks))
            except InvalidInputError as exc:
                problems.append((lineno, str(exc)))
    if problems:
        raise RecordError(problems)
    if not records:
        log.warning("%s contains no package rows", path)
    return records


def write_packages_csv(path: str | Path, records: Iterable[PackageRecord]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PACKAGE_COLUMNS)
        for r in records:
            writer.writerow([r.test_id, r.headline, r.lede or "", r.impressions, r.clicks])


@dataclass
class ExperimentConfig:
    """Simulation settings plus model source and analysis options.

    JSON layout::

        {"schema_version": 1,
         "simulation": {... SimConfig fields ...},
         "model": {"path": "model.json"} | {"synthetic": {"seed": 0, "intercept": 0.5, "score_sd": 0.25}},
         "mapping": "clipped_linear", "probability_floor": 0.001,
         "analysis": {"fit_degrees": [1, 3], "bootstrap": 2000, "bootstrap_seed": 0}}

    A relative model path is resolved against the config file's directory.
    """

    simulation: SimConfig
    model: dict
    mapping: str = "clipped_linear"
    probability_floor: float = 0.001
    analysis: dict = field(default_factory=lambda: {"fit_degrees": [1, 3], "bootstrap": 2000, "bootstrap_seed": 0})
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        version = data.get("schema_version")
        if version != CONFIG_SCHEMA_VERSION:
            raise InvalidInputError(f"unsupported schema_version {version!r} (expected {CONFIG_SCHEMA_VERSION})")
        sim_fields = dict(data.get("simulation", {}))
        try:
            sim = SimConfig(**sim_fields)
        except TypeError as exc:
            raise InvalidInputError(f"bad simulation section: {exc}") from None
        sim.validate()
        model = data.get("model")
        if not isinstance(model, dict) or not ({"path", "synthetic"} & set(model)):
            raise InvalidInputError("config needs a model section with 'path' or 'synthetic'")
        cfg = cls(
            sim,
            model,
            data.get("mapping", "clipped_linear"),
            float(data.get("probability_floor", 0.001)),
            {"fit_degrees": [1, 3], "bootstrap": 2000, "bootstrap_seed": 0, **data.get("analysis", {})},
            Path(base_dir),
        )
        if "path" in model and not cfg.model_path.exists():
            raise InvalidInputError(f"model file not found: {cfg.model_path}")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise InvalidInputError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data, path.parent)

    @property
    def model_path(self) -> Path:
        p = Path(self.model["path"])
        return p if p.is_absolute() else self.base_dir / p

    def decision_model(self) -> DecisionModel:
        kwargs = {"mapping": self.mapping, "probability_floor": self.probability_floor}
        sim = self.simulation
        if "synthetic" in self.model:
            syn = dict(self.model["synthetic"])
            return DecisionModel.synthetic(
                sim.feature_universe, sim.n_features_per_package, int(syn.get("seed", 0)),
                float(syn.get("intercept", 0.5)), float(syn.get("score_sd", 0.25)), **kwargs,
            )
        data = json.loads(self.model_path.read_text(encoding="utf-8"))
        return DecisionModel.from_json(data, **kwargs)

    def to_dict(self) -> dict:
        model = dict(self.model)
        if "path" in model:
            model["path"] = str(self.model_path)
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "simulation": self.simulation.to_dict(),
            "model": model,
            "mapping": self.mapping,
            "probability_floor": self.probability_floor,
            "analysis": self.analysis,
        }


def round_log_rows(results: Sequence[ReplicaResult]) -> list[list]:
    rows = []
    for r in results:
        for log_ in r.round_logs:
            for name, arm in (("A", log_.arm_a), ("B", log_.arm_b)):
                ctr = "" if arm.ctr is None else repr(arm.ctr)
                rows.append([r.replica_index, log_.round_index, name, str(arm.genotype),
                             arm.impressions, arm.clicks, ctr, log_.decision])
    return rows


def write_round_logs(path: str | Path, results: Sequence[ReplicaResult]) -> None:
    import io as _io

    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROUND_LOG_COLUMNS)
    writer.writerows(round_log_rows(results))
    atomic_write_text(path, buf.getvalue())


def write_results(path: str | Path, config: SimConfig, results: Sequence[ReplicaResult]) -> None:
    atomic_write_text(path, json.dumps(
        {"config": config.to_dict(), "replicas": [r.to_json() for r in results]},
        sort_keys=True, separators=(",", ":"),
    ) + "\n")


def read_results(path: str | Path) -> tuple[dict, list[ReplicaResult]]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return data["config"], [ReplicaResult.from_json(r) for r in data["replicas"]]


def write_manifest(path: str | Path, command: str, argv: Sequence[str], config: dict,
                   artifacts: dict[str, Path], seeds: dict | None = None) -> None:
    """Record what was run and checksums of what it produced.

    Artifact paths are stored relative to the manifest's directory.
    """
    from . import __version__, kernels

    path = Path(path)
    entries = {}
    for name, p in artifacts.items():
        p = Path(p)
        try:
            rel = os.path.relpath(p, path.parent)
        except ValueError:
            rel = str(p)
        entries[name] = {"path": rel, "sha256": sha256_file(p)}
    atomic_write_json(path, {
        "tool": "clickcascade",
        "version": __version__,
        "backend": kernels.BACKEND,
        "command": command,
        "argv": list(argv),
        "cwd": os.getcwd(),
        "config": config,
        "seeds": seeds or {},
        "artifacts": entries,
    })
