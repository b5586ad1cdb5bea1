"""CSV signal/profile tables and JSON manifests.

Floats are written with 17 significant digits so every table re-reads to
the identical float64 values.  Each CSV starts with one ``#`` line carrying
the configuration hash.
"""
import json
import os
import string

import numpy as np

from .errors import ConfigInvalid
from .localiser import CostProfile
from .records import GroundTruth, PortRecord

FLOAT_FMT = "%.17g"


def channel_names(prefix, n):
    tags = string.ascii_lowercase[:n] if n > 1 else "0"
    return [f"{prefix}_{c}" for c in tags]


def signal_header(n1, n2, n3):
    return (["t"] + channel_names("v1", n1) + channel_names("i2", n2) + channel_names("v3", n3)
            + channel_names("i3", n3))


def _write_table(path, header, data, config_hash=None):
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# config_hash={config_hash or ''}\n")
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt=FLOAT_FMT, delimiter=",")


def _read_table(path):
    try:
        with open(path) as fh:
            first = fh.readline()
            header_line = fh.readline() if first.startswith("#") else first
            header = [h.strip() for h in header_line.strip().split(",")]
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ConfigInvalid(str(path), f"cannot read: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigInvalid(str(path), f"malformed table: {exc}") from None
    if data.size and data.shape[1] != len(header):
        raise ConfigInvalid(str(path), "column count does not match the header")
    meta = first[1:].strip() if first.startswith("#") else ""
    return header, data, meta


def write_signals(path, record, config_hash=None):
    n1, n2, n3 = record.v1.shape[1], record.i2.shape[1], record.v3.shape[1]
    data = np.column_stack([record.t, record.stacked()])
    _write_table(path, signal_header(n1, n2, n3), data, config_hash)


def read_signals(path):
    header, data, _ = _read_table(path)
    if not header or header[0] != "t":
        raise ConfigInvalid(str(path), "first column must be 't'")
    groups = {}
    for col in header[1:]:
        groups.setdefault(col.split("_", 1)[0], []).append(col)
    if list(groups) != ["v1", "i2", "v3", "i3"]:
        raise ConfigInvalid(str(path), "expected channel groups v1, i2, v3, i3 in that order")
    n1, n2, n3 = len(groups["v1"]), len(groups["i2"]), len(groups["v3"])
    if header != signal_header(n1, n2, n3):
        raise ConfigInvalid(str(path), "unexpected channel names")
    if data.shape[0] < 2:
        raise ConfigInvalid(str(path), "need at least two samples")
    t = data[:, 0]
    dts = np.diff(t)
    dt = float(dts.mean())
    if not dt > 0 or np.abs(dts - dt).max() > 1e-6 * dt:
        raise ConfigInvalid(str(path), "time column must be uniformly spaced")
    if abs(t[0]) > 1e-6 * dt:
        raise ConfigInvalid(str(path), "time column must start at 0")
    o = np.cumsum([1, n1, n2, n3, n3])
    return PortRecord(dt, data[:, o[0]:o[1]], data[:, o[1]:o[2]], data[:, o[2]:o[3]],
                      data[:, o[3]:o[4]])


def write_truth(path, truth, config_hash=None):
    n = truth.v4.shape[1]
    header = ["t"] + channel_names("v4", n) + channel_names("i4", n) + channel_names("vf", n)
    t = truth.dt * np.arange(truth.v4.shape[0])
    _write_table(path, header, np.column_stack([t, truth.v4, truth.i4, truth.vf]), config_hash)


def read_truth(path):
    header, data, _ = _read_table(path)
    n = (len(header) - 1) // 3
    dt = float(data[1, 0] - data[0, 0])
    return GroundTruth(dt, data[:, 1:1 + n], data[:, 1 + n:1 + 2 * n], data[:, 1 + 2 * n:])


PROFILE_HEADER = ["d", "theta", "J", "Jt", "flags"]


def write_profile(path, prof, config_hash=None):
    data = np.column_stack([prof.d, prof.theta, prof.J, prof.Jt, prof.flags.astype(float)])
    _write_table(path, PROFILE_HEADER, data, config_hash)


def profile_manifest(prof, extra=None):
    m = {
        "argmin_J": list(prof.argmin_J),
        "argmin_Jt": list(prof.argmin_Jt),
        "intersection": list(prof.intersection),
        "minimisers_J": prof.minimisers("J"),
        "minimisers_Jt": prof.minimisers("Jt"),
        "domain": list(prof.domain),
        "reference": prof.reference,
        "sublevel_fraction": prof.sublevel_fraction(),
        "meta": prof.meta,
    }
    if "ell" in prof.reference:
        m["error_J"] = prof.error(prof.reference["ell"], "J")
        m["error_Jt"] = prof.error(prof.reference["ell"], "Jt")
    if extra:
        m.update(extra)
    return m


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    return x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    def fix(x):
        if isinstance(x, dict):
            return {k: fix(v) for k, v in x.items()}
        if isinstance(x, list):
            return [fix(v) for v in x]
        if x in ("inf", "-inf", "nan"):
            return float(x)
        return x
    with open(path) as fh:
        return fix(json.load(fh))


def write_bundle(directory, prof, config_hash=None, extra=None):
    os.makedirs(directory, exist_ok=True)
    write_profile(os.path.join(directory, "profile.csv"), prof, config_hash)
    man = profile_manifest(prof, extra)
    man["config_hash"] = config_hash
    write_json(os.path.join(directory, "manifest.json"), man)
    return man


def read_bundle(directory):
    header, data, _ = _read_table(os.path.join(directory, "profile.csv"))
    if header != PROFILE_HEADER:
        raise ConfigInvalid(directory, "unexpected profile columns")
    man = read_json(os.path.join(directory, "manifest.json"))
    prof = CostProfile(d=data[:, 0], theta=data[:, 1], J=data[:, 2], Jt=data[:, 3],
                       flags=data[:, 4].astype(np.int64), domain=tuple(man["domain"]),
                       reference=man["reference"], meta=man["meta"])
    return prof.finalise(), man


def write_summary(path, rows, columns, config_hash=None):
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# config_hash={config_hash or ''}\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_cell(r.get(c)) for c in columns) + "\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(x) for x in v)
    return str(v)
