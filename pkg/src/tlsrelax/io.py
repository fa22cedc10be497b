"""File formats: run configuration, records, spectra, fits and manifests.

Every file carries ``format_version``.  Field names of physical quantities
end in their unit (``_hz``, ``_s``, ``_per_s``); polarizations and duty
fractions are dimensionless and carry no suffix.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .analysis.spectrum import FittedTls, SpectrumDataset, SpectrumFit
from .model import Environment, QubitParams, TlsParams, thermal_polarization
from .reference import (EFFECTIVE_TEMPERATURE_K, GAMMA_Q, SWEEP_START_HZ, SWEEP_STEP_HZ, SWEEP_STOP_HZ,
                        reference_tls)
from .sequences import MeasurementRecord, ProtocolConfig

FORMAT_VERSION = 1
COMMANDS = ("simulate", "analyze", "roundtrip", "pitfalls", "calibrate-demo")


class ConfigError(ValueError):
    """Invalid run configuration or file contents."""


def _check_version(d, what):
    v = d.get("format_version")
    if v != FORMAT_VERSION:
        raise ConfigError(f"{what}: unsupported format_version {v!r} (expected {FORMAT_VERSION})")


# --------------------------------------------------------------------------
# protocol config

_DURATIONS = ("pump_duration", "idle_duration", "readout_duration", "extra_wait", "interaction_window")


def config_to_dict(cfg: ProtocolConfig):
    d = cfg.to_dict()
    out = {}
    for k, v in d.items():
        if k in _DURATIONS or k == "delays":
            out[k + "_s"] = v
        elif k == "gamma_qt_eff":
            out["gamma_qt_eff_per_s"] = v
        else:
            out[k] = v
    return out


def config_from_dict(d, base: ProtocolConfig | None = None):
    """Build a ProtocolConfig from unit-suffixed keys.

    ``block`` (``"1.6ms"`` or ``"800us"``) selects the FD-4 block layout;
    keys not given fall back to ``base`` or to the variant's defaults.
    """
    d = dict(d)
    kw = {}
    for k, v in d.items():
        if k.endswith("_per_s") and k[:-6] == "gamma_qt_eff":
            kw["gamma_qt_eff"] = float(v)
        elif k.endswith("_s") and (k[:-2] in _DURATIONS or k[:-2] == "delays"):
            kw[k[:-2]] = tuple(v) if k == "delays_s" else float(v)
        elif k in ("variant", "block"):
            continue
        elif k in {f.name for f in fields(ProtocolConfig)} and k not in _DURATIONS + ("delays", "gamma_qt_eff"):
            kw[k] = v
        else:
            raise ConfigError(f"unknown protocol key {k!r}")
    variant = d.get("variant", base.variant if base is not None else "FD4")
    try:
        if base is not None:
            return ProtocolConfig(**{**base.to_dict(), **kw})
        if variant == "FD4":
            return ProtocolConfig.fd4(block=d.get("block", "1.6ms"), **kw)
        if variant == "CD8":
            return ProtocolConfig.cd8(**kw)
        if variant == "StandardT1":
            return ProtocolConfig.standard_t1(**kw)
        if variant == "BathPrepT1":
            return ProtocolConfig.bath_prep(**kw)
        raise ConfigError(f"unknown protocol variant {variant!r}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid protocol: {exc}") from exc


# --------------------------------------------------------------------------
# environment


def env_to_dict(env: Environment):
    return {
        "gamma_q_per_s": env.qubit.gamma_q,
        "z_eq": env.qubit.z_eq,
        "qubit_freq_hz": env.qubit_freq_hz,
        "tls": [{"freq_hz": t.freq_hz, "g_hz": t.g_hz, "gamma2_hz": t.gamma2_hz, "gamma_t_per_s": t.gamma_t,
                 "p_eq": t.p_eq} for t in env.tls],
    }


def env_from_dict(d, base_dir: Path | None = None):
    """Environment from a dict, ``"reference"``, or ``{"path": ...}``.

    ``temperature_k`` (if present) sets every missing ``p_eq`` and the
    default ``z_eq`` thermally at each frequency.
    """
    if d == "reference":
        d = {"reference": True}
    if not isinstance(d, dict):
        raise ConfigError("environment must be an object, a path object or 'reference'")
    if "path" in d:
        p = Path(d["path"])
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        return env_from_dict(read_json(p), p.parent)
    temp = d.get("temperature_k")
    f0 = d.get("qubit_freq_hz", SWEEP_START_HZ)
    try:
        if d.get("reference"):
            temp = EFFECTIVE_TEMPERATURE_K if temp is None else temp
            tls = reference_tls(temp)
            gamma_q = d.get("gamma_q_per_s", GAMMA_Q)
        else:
            gamma_q = d["gamma_q_per_s"]
            tls = []
            for t in d.get("tls", []):
                p_eq = t.get("p_eq")
                if p_eq is None:
                    p_eq = thermal_polarization(t["freq_hz"], temp) if temp is not None else d.get("z_eq", 0.0)
                tls.append(TlsParams(float(t["freq_hz"]), float(t["g_hz"]), float(t["gamma2_hz"]),
                                     float(t["gamma_t_per_s"]), float(p_eq)))
        z_eq = d.get("z_eq")
        if z_eq is None:
            z_eq = thermal_polarization(f0, temp) if temp is not None else 0.0
        return Environment(QubitParams(float(gamma_q), float(z_eq)), tuple(tls), f0 if tls else None)
    except KeyError as exc:
        raise ConfigError(f"environment is missing {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid environment: {exc}") from exc


def z_eq_function(env_spec):
    """Per-frequency qubit equilibrium polarization, or None for a fixed one."""
    if isinstance(env_spec, dict) and "z_eq" not in env_spec and (
            env_spec.get("reference") or env_spec.get("temperature_k") is not None):
        temp = env_spec.get("temperature_k", EFFECTIVE_TEMPERATURE_K)
        return lambda f: thermal_polarization(f, temp)
    if env_spec == "reference":
        return lambda f: thermal_polarization(f, EFFECTIVE_TEMPERATURE_K)
    return None


# --------------------------------------------------------------------------
# run configuration


@dataclass
class SweepSpec:
    start_hz: float = SWEEP_START_HZ
    stop_hz: float = SWEEP_STOP_HZ
    step_hz: float = SWEEP_STEP_HZ

    def __post_init__(self):
        if not (np.isfinite(self.start_hz) and np.isfinite(self.stop_hz) and self.start_hz <= self.stop_hz):
            raise ConfigError("sweep needs start_hz <= stop_hz")
        if not self.step_hz > 0:
            raise ConfigError("sweep step_hz must be > 0")

    def frequencies(self):
        n = int(np.floor((self.stop_hz - self.start_hz) / self.step_hz + 1e-9)) + 1
        return self.start_hz + self.step_hz * np.arange(n)


@dataclass
class RunConfig:
    """Everything one CLI command needs.  See the README for the JSON schema."""

    command: str = "roundtrip"
    environment: object = "reference"
    fd4: dict = field(default_factory=dict)
    cd8: dict | None = field(default_factory=dict)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    seed: int | None = 0
    output_dir: str = "out"
    input_dir: str | None = None
    workers: int = 1
    format: str = "json"
    refine: bool = True
    pitfalls: dict = field(default_factory=dict)
    calibration: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        if not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError("workers must be a positive integer")
        if self.seed is not None and not (isinstance(self.seed, int) and self.seed >= 0):
            raise ConfigError("seed must be a non-negative integer")
        if self.command == "analyze" and self.input_dir is None:
            raise ConfigError("analyze needs input_dir")
        if self.input_dir is not None and not self.resolve(self.input_dir).is_dir():
            raise ConfigError(f"input_dir {self.input_dir!r} does not exist")
        if isinstance(self.environment, dict) and "path" in self.environment:
            if not self.resolve(self.environment["path"]).is_file():
                raise ConfigError(f"environment file {self.environment['path']!r} does not exist")

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def env(self):
        return env_from_dict(self.environment, self.base_dir)

    def fd4_config(self):
        return config_from_dict({"variant": "FD4", "readout_noise_sigma": 0.5, "cycles": 2500, **self.fd4})

    def cd8_config(self):
        if self.cd8 is None:
            return None
        return config_from_dict({"variant": "CD8", "readout_noise_sigma": 0.5, "cycles": 20000, **self.cd8})

    @classmethod
    def from_dict(cls, d, base_dir: Path | None = None):
        d = dict(d)
        unknown = set(d) - ({f.name for f in fields(cls)} | {"format_version"})
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "format_version" in d:
            _check_version(d, "config")
            del d["format_version"]
        sweep = d.pop("sweep", None)
        if sweep is not None:
            try:
                d["sweep"] = SweepSpec(**sweep)
            except TypeError as exc:
                raise ConfigError(f"invalid sweep: {exc}") from exc
        if base_dir is not None:
            d["base_dir"] = base_dir
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path):
    path = Path(path)
    return RunConfig.from_dict(read_json(path), path.parent)


# --------------------------------------------------------------------------
# generic helpers


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def _float(v):
    # float() also parses the "nan" / "inf" strings written by _clean
    return float(v)


def write_json(path, obj):
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(_clean({"format_version": FORMAT_VERSION, **obj}), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def write_csv(path, header, rows):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(f"# format_version={FORMAT_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def read_csv(path):
    """Header and rows of a CSV written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# format_version={FORMAT_VERSION}":
            raise ConfigError(f"{path}: missing or unsupported format_version line")
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files, extra=None):
    """``manifest.json`` listing every file (relative path) with its sha256."""
    out_dir = Path(out_dir)
    entries = [{"path": str(Path(f).relative_to(out_dir)), "sha256": sha256(f)} for f in files]
    return write_json(out_dir / "manifest.json", {"files": entries, **(extra or {})})


def read_manifest(out_dir):
    d = read_json(Path(out_dir) / "manifest.json")
    _check_version(d, "manifest")
    return d


# --------------------------------------------------------------------------
# measurement records

RECORD_FIELDS = ("half", "block", "T_s", "t_s", "z")


def record_to_json(record: MeasurementRecord, path):
    s = record.samples
    diag = {k: v for k, v in record.diagnostics.items() if k != "final_state"}
    return write_json(path, {
        "kind": "measurement_record",
        "config": config_to_dict(record.config),
        "truth": env_to_dict(record.truth) if record.truth is not None else None,
        "diagnostics": diag,
        "samples": {name: s[name] for name in RECORD_FIELDS},
    })


def record_from_json(path):
    d = read_json(path)
    _check_version(d, str(path))
    if d.get("kind") != "measurement_record":
        raise ConfigError(f"{path}: not a measurement record")
    cfg = config_from_dict(d["config"])
    s = d["samples"]
    rows = list(zip(s["half"], s["block"], map(float, s["T_s"]), map(float, s["t_s"]), map(float, s["z"])))
    truth = env_from_dict(d["truth"]) if d.get("truth") else None
    return MeasurementRecord(np.array(rows, dtype=MeasurementRecord.DTYPE), cfg, truth,
                             {k: (_float(v) if isinstance(v, (str, float, int)) else v)
                              for k, v in d.get("diagnostics", {}).items()})


def record_to_csv(record: MeasurementRecord, path):
    """Columnar samples; the config and diagnostics go to a JSON sidecar."""
    path = Path(path)
    s = record.samples
    write_csv(path, RECORD_FIELDS, zip(s["half"], s["block"].tolist(), s["T_s"], s["t_s"], s["z"]))
    side = path.with_suffix(".meta.json")
    diag = {k: v for k, v in record.diagnostics.items() if k != "final_state"}
    write_json(side, {"kind": "measurement_record_meta", "config": config_to_dict(record.config),
                      "truth": env_to_dict(record.truth) if record.truth is not None else None,
                      "diagnostics": diag})
    return path, side


def record_from_csv(path):
    path = Path(path)
    header, rows = read_csv(path)
    if tuple(header) != RECORD_FIELDS:
        raise ConfigError(f"{path}: unexpected columns {header}")
    meta = read_json(path.with_suffix(".meta.json"))
    _check_version(meta, str(path))
    samples = np.array([(h, int(b), float(T), float(t), float(z)) for h, b, T, t, z in rows],
                       dtype=MeasurementRecord.DTYPE)
    truth = env_from_dict(meta["truth"]) if meta.get("truth") else None
    return MeasurementRecord(samples, config_from_dict(meta["config"]), truth,
                             {k: (_float(v) if isinstance(v, (str, float, int)) else v)
                              for k, v in meta.get("diagnostics", {}).items()})


def read_record(path):
    path = Path(path)
    return record_from_csv(path) if path.suffix == ".csv" else record_from_json(path)


# --------------------------------------------------------------------------
# spectra and fits

DATASET_COLUMNS = (
    ("omega_q_hz", "omega_q_hz"), ("gamma_sigma_per_s", "gamma_sigma"),
    ("gamma_sigma_err_per_s", "gamma_sigma_err"), ("gamma_deltadelta_per_s", "gamma_deltadelta"),
    ("gamma_deltadelta_err_per_s", "gamma_deltadelta_err"), ("zbar_h", "zbar_h"), ("zbar_l", "zbar_l"),
    ("eta", "eta"), ("epsilon", "epsilon"), ("gamma_qt_eff_per_s", "gamma_qt_eff"),
    ("reset_contrast", "reset_contrast"), ("half_length_s", "half_length_s"),
)


def dataset_to_csv(data: SpectrumDataset, path):
    cols = [getattr(data, attr) for _, attr in DATASET_COLUMNS]
    header = [name for name, _ in DATASET_COLUMNS] + ["protocol", "static"]
    rows = [[c[i] for c in cols] + [data.protocol[i], int(data.static[i])] for i in range(len(data))]
    return write_csv(path, header, rows)


def dataset_from_csv(path):
    header, rows = read_csv(path)
    expected = [name for name, _ in DATASET_COLUMNS] + ["protocol", "static"]
    if header != expected:
        raise ConfigError(f"{path}: unexpected columns {header}")
    cols = list(zip(*rows)) if rows else [[] for _ in expected]
    kw = {attr: np.array(cols[i], dtype=float) for i, (_, attr) in enumerate(DATASET_COLUMNS)}
    return SpectrumDataset(**kw, protocol=np.array(cols[-2], dtype=str),
                           static=np.array(cols[-1], dtype=int).astype(bool))


def dataset_to_json(data: SpectrumDataset, path):
    cols = {name: getattr(data, attr) for name, attr in DATASET_COLUMNS}
    return write_json(path, {"kind": "spectrum_dataset", **cols, "protocol": data.protocol,
                             "static": data.static})


def dataset_from_json(path):
    d = read_json(path)
    _check_version(d, str(path))
    kw = {attr: np.array([_float(v) for v in d[name]]) for name, attr in DATASET_COLUMNS}
    return SpectrumDataset(**kw, protocol=np.array(d["protocol"], dtype=str),
                           static=np.array(d["static"], dtype=bool))


def fit_to_dict(fit: SpectrumFit):
    return {
        "kind": "spectrum_fit",
        "gamma_q_per_s": fit.gamma_q,
        "gamma_q_err_per_s": fit.gamma_q_err,
        "residual": fit.residual,
        "dof": fit.dof,
        "residual_deltadelta": fit.residual_deltadelta,
        "dof_deltadelta": fit.dof_deltadelta,
        "warnings": list(fit.warnings),
        "tls": [{"freq_hz": t.freq_hz, "freq_err_hz": t.freq_err, "g_hz": t.g_hz, "g_err_hz": t.g_err,
                 "gamma2_hz": t.gamma2_hz, "gamma2_err_hz": t.gamma2_err, "gamma_t_per_s": t.gamma_t,
                 "gamma_t_low_per_s": t.gamma_t_interval[0], "gamma_t_high_per_s": t.gamma_t_interval[1]}
                for t in fit.tls],
    }


def fit_to_json(fit: SpectrumFit, path):
    return write_json(path, fit_to_dict(fit))


def fit_from_json(path):
    d = read_json(path)
    _check_version(d, str(path))
    tls = [FittedTls(_float(t["freq_hz"]), _float(t["freq_err_hz"]), _float(t["g_hz"]), _float(t["g_err_hz"]),
                     _float(t["gamma2_hz"]), _float(t["gamma2_err_hz"]), _float(t["gamma_t_per_s"]),
                     (_float(t["gamma_t_low_per_s"]), _float(t["gamma_t_high_per_s"]))) for t in d["tls"]]
    return SpectrumFit(_float(d["gamma_q_per_s"]), _float(d["gamma_q_err_per_s"]), tls, _float(d["residual"]),
                       _float(d["residual_deltadelta"]), int(d["dof"]), int(d["dof_deltadelta"]),
                       warnings=list(d["warnings"]))


def spectrum_residuals_to_csv(fit: SpectrumFit, data: SpectrumDataset, path):
    """Per-point data, model and normalized residual of both spectra."""
    model_s = fit.gamma_sigma_at(data.omega_q_hz)
    model_d = fit.gamma_deltadelta_at(data)
    rows = zip(data.omega_q_hz, data.gamma_sigma, model_s, fit.residuals_sigma, data.gamma_deltadelta, model_d,
               fit.residuals_deltadelta, data.static.astype(int))
    return write_csv(path, ("omega_q_hz", "gamma_sigma_per_s", "gamma_sigma_model_per_s", "gamma_sigma_pull",
                            "gamma_deltadelta_per_s", "gamma_deltadelta_model_per_s", "gamma_deltadelta_pull",
                            "static"), rows)
