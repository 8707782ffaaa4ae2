"""JSON project files.

A project document has the shape::

    {
      "schema_version": 1,
      "systems":      {name: system},
      "certificates": {name: certificate},
      "networks":     {name: network},
      "run":          {dt, horizon, trials, seed, tolerance, samples,
                       sample_range, pi, pi_prime}
    }

Matrices are nested row-major arrays. Errors carry a JSON pointer to the
offending entry.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DimensionError, DissimError
from .hybrid_model import (AuxiliarySystem, InputSignal, JumpDiffusionSystem,
                           Nonlinearity)
from .storage import StorageCertificate, _check_seed_dims

__all__ = ["SCHEMA_VERSION", "ProjectConfig", "NetworkSpec", "load_config",
           "parse_config", "dump_config", "system_to_dict", "system_from_dict",
           "certificate_to_dict", "certificate_from_dict", "DEFAULT_RUN"]

SCHEMA_VERSION = 1

DEFAULT_RUN = {"dt": 1e-3, "horizon": 5.0, "trials": 100, "seed": 0,
               "tolerance": 1e-8, "samples": 10_000, "sample_range": 5.0,
               "pi": None, "pi_prime": None}

_SYSTEM_KEYS = {"A", "B", "C1", "C2", "D", "E", "F", "G", "R", "lam", "phi"}
_CERT_MATRICES = ("Mhat", "K", "X", "L1", "Z", "W", "Lambda", "L2", "What",
                  "P", "Q", "H", "Rtilde")
_CERT_KEYS = set(_CERT_MATRICES) | {"system", "abstraction", "aux",
                                    "kappa_hat", "kappa_bar", "Bhat"}
_NET_KEYS = {"subsystems", "abstractions", "certificates", "M", "Mhat", "mu",
             "Qtilde", "qtilde_scale", "uhat", "x0", "xhat0", "x0_spread",
             "reference"}


@dataclass
class NetworkSpec:
    """Names and data of a network entry; resolved lazily because the
    abstractions may still have to be built."""

    subsystems: list
    certificates: list
    M: np.ndarray
    abstractions: list = None
    Mhat: np.ndarray = None
    mu: np.ndarray = None
    Qtilde: np.ndarray = None
    qtilde_scale: float = None
    uhat: InputSignal = None
    x0: np.ndarray = None
    xhat0: np.ndarray = None
    x0_spread: float = 0.0
    reference: dict = None


@dataclass
class ProjectConfig:
    systems: dict = field(default_factory=dict)
    certificates: dict = field(default_factory=dict)
    cert_meta: dict = field(default_factory=dict)
    networks: dict = field(default_factory=dict)
    run: dict = field(default_factory=lambda: dict(DEFAULT_RUN))
    source: str = None


# --------------------------------------------------------------------------
# helpers

def _matrix(value, path):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("expected a numeric array", path) from None
    if arr.ndim > 2:
        raise ConfigError(f"expected at most 2 dimensions, got {arr.ndim}",
                          path)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("non-finite entry", path)
    return arr


def _obj(value, path):
    if not isinstance(value, dict):
        raise ConfigError(f"expected an object, got {type(value).__name__}",
                          path)
    return value


def _unknown(d, allowed, path):
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"unknown key {extra[0]!r}", f"{path}/{extra[0]}")


def _number(value, path, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number", path)
    if integer and int(value) != value:
        raise ConfigError("expected an integer", path)
    if positive and not value > 0:
        raise ConfigError("must be positive", path)
    return int(value) if integer else float(value)


# --------------------------------------------------------------------------
# nonlinearities and signals

def phi_to_dict(phi):
    if phi.kind == "custom":
        raise ValueError("custom nonlinearities cannot be serialized")
    d = {"kind": phi.kind, "dim": phi.dim,
         "multiplier": phi.multiplier.tolist()}
    if phi.kind == "table":
        d["knots"], d["values"] = (np.asarray(v).tolist() for v in phi.table)
    if phi.kind == "stacked":
        d["parts"] = [phi_to_dict(p) for p in phi.parts]
    return d


def phi_from_dict(d, path):
    _obj(d, path)
    kind = d.get("kind", "zero")
    dim = _number(d.get("dim", 0), f"{path}/dim", integer=True)
    mult = d.get("multiplier")
    mult = None if mult is None else _matrix(mult, f"{path}/multiplier")
    try:
        if kind == "zero":
            return Nonlinearity.zero(dim, mult)
        if kind == "sine_sum":
            return Nonlinearity.sine(dim, mult)
        if kind == "table":
            return Nonlinearity.from_table(d["knots"], d["values"], dim, mult)
        if kind == "stacked":
            return Nonlinearity.stack(
                [phi_from_dict(p, f"{path}/parts/{i}")
                 for i, p in enumerate(d.get("parts", []))])
    except DimensionError as exc:
        raise ConfigError(str(exc), f"{path}/{exc.block or ''}") from None
    except KeyError as exc:
        raise ConfigError("missing key", f"{path}/{exc.args[0]}") from None
    raise ConfigError(f"unknown nonlinearity kind {kind!r}; use 'zero', "
                      "'sine_sum' or 'table'", f"{path}/kind")


def signal_from_dict(d, path):
    _obj(d, path)
    try:
        return InputSignal.from_dict(d)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc), path) from None


# --------------------------------------------------------------------------
# systems and certificates

def system_to_dict(sys):
    return {"A": sys.A.tolist(), "B": sys.B.tolist(), "C1": sys.C1.tolist(),
            "C2": sys.C2.tolist(), "D": sys.D.tolist(), "E": sys.E.tolist(),
            "F": sys.F.tolist(), "G": sys.G.tolist(), "R": sys.R.tolist(),
            "lam": sys.lam.tolist(), "phi": phi_to_dict(sys.phi)}


def system_from_dict(d, path="/systems/?"):
    _obj(d, path)
    _unknown(d, _SYSTEM_KEYS, path)
    if "A" not in d:
        raise ConfigError("missing key", f"{path}/A")
    kw = {}
    for key in ("A", "B", "C1", "C2", "D", "E", "F", "G", "R", "lam"):
        if key in d and d[key] is not None:
            kw[key] = _matrix(d[key], f"{path}/{key}")
            if kw[key].size == 0:
                kw[key] = None
    kw.setdefault("B", None)
    kw.setdefault("C1", None)
    if d.get("phi") is not None:
        kw["phi"] = phi_from_dict(d["phi"], f"{path}/phi")
    try:
        return JumpDiffusionSystem(**kw)
    except DimensionError as exc:
        raise ConfigError(str(exc), f"{path}/{exc.block or ''}") from None
    except DissimError as exc:
        raise ConfigError(str(exc), path) from None
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def aux_to_dict(aux):
    return {"Atheta": aux.Atheta.tolist(), "Btheta": aux.Btheta.tolist(),
            "Ctheta": aux.Ctheta.tolist(), "Dtheta": aux.Dtheta.tolist(),
            "split": aux.split}


def aux_from_dict(d, path):
    _obj(d, path)
    _unknown(d, {"Atheta", "Btheta", "Ctheta", "Dtheta", "split"}, path)
    for key in ("Dtheta", "split"):
        if key not in d:
            raise ConfigError("missing key", f"{path}/{key}")
    mats = {k: _matrix(d.get(k, []), f"{path}/{k}")
            for k in ("Atheta", "Btheta", "Ctheta", "Dtheta")}
    if mats["Atheta"].size == 0:
        mats["Atheta"] = np.zeros((0, 0))
    try:
        return AuxiliarySystem(mats["Atheta"], mats["Btheta"],
                               mats["Ctheta"], mats["Dtheta"],
                               _number(d["split"], f"{path}/split",
                                       integer=True))
    except DimensionError as exc:
        raise ConfigError(str(exc), f"{path}/{exc.block or ''}") from None


def certificate_to_dict(cert, system=None, abstraction=None):
    d = {}
    if system is not None:
        d["system"] = system
    if abstraction is not None:
        d["abstraction"] = abstraction
    for key in _CERT_MATRICES:
        val = getattr(cert, key)
        if val is not None:
            d[key] = val.tolist()
    d["aux"] = aux_to_dict(cert.aux)
    d["kappa_hat"] = cert.kappa_hat
    d["kappa_bar"] = cert.kappa_bar
    return d


def certificate_from_dict(d, path="/certificates/?"):
    _obj(d, path)
    _unknown(d, _CERT_KEYS, path)
    for key in ("Mhat", "K", "X", "Z", "aux", "kappa_hat", "kappa_bar"):
        if key not in d:
            raise ConfigError("missing key", f"{path}/{key}")
    kw = {}
    for key in _CERT_MATRICES:
        if key in d and d[key] is not None:
            kw[key] = _matrix(d[key], f"{path}/{key}")
    kw["aux"] = aux_from_dict(d["aux"], f"{path}/aux")
    kw["kappa_hat"] = _number(d["kappa_hat"], f"{path}/kappa_hat")
    kw["kappa_bar"] = _number(d["kappa_bar"], f"{path}/kappa_bar")
    if kw.get("L1") is None or kw["L1"].size == 0:
        m = kw["K"].shape[0] if kw["K"].ndim == 2 else 1
        kw["L1"] = np.zeros((m, 0))
    for key in ("L2", "What", "Lambda"):
        if key in kw and kw[key].size == 0:
            kw[key] = np.zeros((kw["K"].shape[0] if key == "L2" else 0, 0))
    try:
        return StorageCertificate(**kw)
    except DimensionError as exc:
        raise ConfigError(str(exc), f"{path}/{exc.block or ''}") from None
    except DissimError as exc:
        raise ConfigError(str(exc), path) from None


# --------------------------------------------------------------------------
# networks

def network_from_dict(d, path, cfg):
    _obj(d, path)
    _unknown(d, _NET_KEYS, path)
    for key in ("subsystems", "certificates", "M"):
        if key not in d:
            raise ConfigError("missing key", f"{path}/{key}")
    subs = _names(d["subsystems"], f"{path}/subsystems", cfg.systems)
    certs = _names(d["certificates"], f"{path}/certificates",
                   cfg.certificates)
    if len(certs) != len(subs):
        raise ConfigError("need one certificate per subsystem",
                          f"{path}/certificates")
    abstractions = None
    if d.get("abstractions") is not None:
        abstractions = _names(d["abstractions"], f"{path}/abstractions",
                              cfg.systems)
        if len(abstractions) != len(subs):
            raise ConfigError("need one abstraction per subsystem",
                              f"{path}/abstractions")
    p = sum(cfg.systems[s].p for s in subs)
    q = sum(cfg.systems[s].q2 for s in subs)
    M = _matrix(d["M"], f"{path}/M")
    if M.shape != (p, q):
        raise ConfigError(f"M has shape {M.shape}, expected {(p, q)} "
                          "(stacked p by stacked q2)", f"{path}/M")
    spec = NetworkSpec(subs, certs, M, abstractions)
    if d.get("Mhat") is not None:
        spec.Mhat = _matrix(d["Mhat"], f"{path}/Mhat")
    if d.get("mu") is not None:
        spec.mu = _matrix(d["mu"], f"{path}/mu").ravel()
        if spec.mu.size != len(subs) or np.any(spec.mu <= 0):
            raise ConfigError("mu needs one positive weight per subsystem",
                              f"{path}/mu")
    if d.get("Qtilde") is not None:
        spec.Qtilde = _matrix(d["Qtilde"], f"{path}/Qtilde")
    if d.get("qtilde_scale") is not None:
        spec.qtilde_scale = _number(d["qtilde_scale"],
                                    f"{path}/qtilde_scale")
    if d.get("uhat") is not None:
        spec.uhat = signal_from_dict(d["uhat"], f"{path}/uhat")
    for key in ("x0", "xhat0"):
        if d.get(key) is not None:
            setattr(spec, key, _matrix(d[key], f"{path}/{key}").ravel())
    if d.get("x0_spread") is not None:
        spec.x0_spread = _number(d["x0_spread"], f"{path}/x0_spread")
    spec.reference = d.get("reference")
    return spec


def _names(value, path, table):
    if not isinstance(value, list):
        raise ConfigError("expected a list of names", path)
    for i, name in enumerate(value):
        if name not in table:
            raise ConfigError(f"unknown name {name!r}", f"{path}/{i}")
    return list(value)


# --------------------------------------------------------------------------
# documents

def _escape(name):
    return str(name).replace("~", "~0").replace("/", "~1")


def parse_config(doc, source=None):
    """Validate a decoded JSON document and build a :class:`ProjectConfig`.
    """
    _obj(doc, "")
    _unknown(doc, {"schema_version", "systems", "certificates", "networks",
                   "run", "description"}, "")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}; "
                          f"expected {SCHEMA_VERSION}", "/schema_version")
    cfg = ProjectConfig(source=source)
    for name, d in _obj(doc.get("systems", {}), "/systems").items():
        cfg.systems[name] = system_from_dict(d, f"/systems/{_escape(name)}")
    for name, d in _obj(doc.get("certificates", {}),
                        "/certificates").items():
        path = f"/certificates/{_escape(name)}"
        cert = certificate_from_dict(d, path)
        meta = {"system": d.get("system"), "abstraction": d.get("abstraction"),
                "Bhat": d.get("Bhat")}
        for key in ("system", "abstraction"):
            ref = meta[key]
            if ref is not None and ref not in cfg.systems:
                raise ConfigError(f"unknown system {ref!r}", f"{path}/{key}")
        if meta["system"] is not None:
            try:
                _check_seed_dims(cfg.systems[meta["system"]], cert)
            except DimensionError as exc:
                raise ConfigError(str(exc), f"{path}/{exc.block}") from None
        if meta["Bhat"] is not None:
            meta["Bhat"] = _matrix(meta["Bhat"], f"{path}/Bhat")
        cfg.certificates[name] = cert
        cfg.cert_meta[name] = meta
    for name, d in _obj(doc.get("networks", {}), "/networks").items():
        cfg.networks[name] = network_from_dict(
            d, f"/networks/{_escape(name)}", cfg)
    run = _obj(doc.get("run", {}), "/run")
    _unknown(run, set(DEFAULT_RUN) | {"u"}, "/run")
    for key, val in run.items():
        if key == "u":
            cfg.run["u"] = signal_from_dict(val, "/run/u")
        elif val is None:
            cfg.run[key] = None
        else:
            cfg.run[key] = _number(val, f"/run/{key}",
                                   positive=key not in ("seed",),
                                   integer=key in ("trials", "seed",
                                                   "samples"))
    return cfg


def load_config(path):
    """Read and validate a project file.

    Raises
    ------
    ConfigError
        On unreadable files, JSON syntax errors (with line and column),
        schema violations and dimension mismatches.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column "
                          f"{exc.colno}: {exc.msg}") from None
    return parse_config(doc, source=str(path))


def dump_config(doc, path):
    """Write a document with ``schema_version`` set."""
    doc = {"schema_version": SCHEMA_VERSION, **doc}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
