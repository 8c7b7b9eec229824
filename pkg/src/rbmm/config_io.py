"""Run configuration files and deterministic CSV output.

Config files are INI-style with three sections::

    [run]
    n_particles = 1000
    batch_size = 40
    ...
    [system]
    order = 1
    ...
    [kernel]
    id = BiotSavart

Unknown sections or keys are errors. ``kernel.id`` is the only required key;
every default that fires is listed in ``ConfigDocument.provenance``.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from rbmm.core import ConfigError, RunConfig, SystemSpec
from rbmm.kernels import DEFAULT_PARAMS, KernelSpec, regularize


class ConfigLoadError(ConfigError):
    def __init__(self, message, key=None, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        if key is not None:
            where += f" [{key}]"
        super().__init__(f"{where.strip()}: {message}" if where else message)
        self.key = key
        self.line = line


_RUN_FIELDS = {
    "n_particles": int,
    "batch_size": int,
    "tau": float,
    "t_end": float,
    "beta": float,
    "delta": float,
    "seed": int,
    "solvers": lambda s: tuple(t.strip() for t in s.split(",") if t.strip()),
    "init": str,
    "save_every": int,
    "first_step": str,
}
_SYSTEM_FIELDS = {
    "order": int,
    "external_drift": str,
    "sigma": float,
    "prefactor": str,
}
_KERNEL_PARAMS = sorted({k for v in DEFAULT_PARAMS.values() for k in v})
_KERNEL_FIELDS = {"id": str, **{k: float for k in _KERNEL_PARAMS}}
SECTIONS = {"run": _RUN_FIELDS, "system": _SYSTEM_FIELDS, "kernel": _KERNEL_FIELDS}
_REQUIRED = {("kernel", "id")}


@dataclass
class ConfigDocument:
    run: RunConfig
    system: SystemSpec
    source: str | None = None
    provenance: list = field(default_factory=list)

    @property
    def kernel(self) -> KernelSpec:
        return self.system.kernel


def _key_lines(text: str) -> dict:
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:]+)[=:]", s)
        if m:
            lines.setdefault((section, m.group(1).strip()), no)
    return lines


def loads_config(text: str, source: str | None = None) -> ConfigDocument:
    lines = _key_lines(text)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<string>")
    except configparser.Error as exc:
        raise ConfigLoadError(str(exc).splitlines()[0], path=source) from exc

    values = {name: {} for name in SECTIONS}
    for sec in parser.sections():
        if sec not in SECTIONS:
            raise ConfigLoadError("unknown section", key=sec, line=lines.get((sec, None)), path=source)
        for key, raw in parser.items(sec):
            full = f"{sec}.{key}"
            line = lines.get((sec, key))
            if key not in SECTIONS[sec]:
                raise ConfigLoadError("unknown key", key=full, line=line, path=source)
            try:
                values[sec][key] = SECTIONS[sec][key](raw)
            except ValueError as exc:
                raise ConfigLoadError(f"bad value {raw!r}: {exc}", key=full, line=line, path=source) from exc

    for sec, key in _REQUIRED:
        if key not in values[sec]:
            raise ConfigLoadError("missing required key", key=f"{sec}.{key}", path=source)

    provenance = [f"run.{k}" for k in _RUN_FIELDS if k not in values["run"]]
    provenance += [f"system.{k}" for k in _SYSTEM_FIELDS if k not in values["system"]]
    kid = values["kernel"].pop("id")
    kparams = values["kernel"]
    for k in DEFAULT_PARAMS.get(kid, {}):
        if k not in kparams:
            provenance.append(f"kernel.{k}")

    def where(sec, key):
        return dict(key=f"{sec}.{key}", line=lines.get((sec, key)), path=source)

    try:
        kernel = KernelSpec(kid, kparams)
    except ConfigError as exc:
        bad = next(iter(kparams), "id")
        raise ConfigLoadError(str(exc), **where("kernel", bad)) from exc
    try:
        run = RunConfig(**values["run"])
    except ConfigError as exc:
        raise ConfigLoadError(str(exc), **where("run", _guess_key(str(exc), _RUN_FIELDS))) from exc
    if run.delta > 0:
        kernel = regularize(kernel, run.delta)
    try:
        system = SystemSpec(kernel=kernel, **values["system"])
    except (ConfigError, ValueError) as exc:
        raise ConfigLoadError(str(exc), **where("system", _guess_key(str(exc), _SYSTEM_FIELDS))) from exc
    want = 1 if run.init == "UniformInterval1D" else 2
    if want != kernel.dim:
        raise ConfigLoadError(f"init {run.init} does not match the {kernel.dim}-D kernel {kid}",
                              **where("run", "init"))
    return ConfigDocument(run, system, source, provenance)


def _guess_key(message: str, fields) -> str | None:
    if "t_end/tau" in message:
        return "t_end"
    for k in fields:
        if k in message:
            return k
    return None


def load_config(path) -> ConfigDocument:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigLoadError(f"cannot read config: {exc}", path=str(path)) from exc
    return loads_config(text, source=str(path))


def format_value(v) -> str:
    """Round-trip exact text for CSV and config output."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    if hasattr(v, "item"):
        return format_value(v.item())
    return str(v)


def run_dict(run: RunConfig) -> dict:
    d = dataclasses.asdict(run)
    d["solvers"] = list(run.solvers)
    return d


def system_dict(system: SystemSpec) -> dict:
    k = system.kernel
    return {
        "order": system.order,
        "external_drift": system.external_drift,
        "sigma": system.sigma,
        "prefactor": system.prefactor.value,
        "kernel": {"id": k.id, "params": dict(k.params), "delta": k.delta},
    }


def system_from_dict(d: dict) -> SystemSpec:
    k = d["kernel"]
    kernel = KernelSpec(k["id"], k["params"], k["delta"])
    return SystemSpec(kernel=kernel, order=d["order"], external_drift=d["external_drift"],
                      sigma=d["sigma"], prefactor=d["prefactor"])


def run_from_dict(d: dict) -> RunConfig:
    return RunConfig(**{**d, "solvers": tuple(d["solvers"])})


def dumps_config(doc: ConfigDocument) -> str:
    """Normalized config text; loading it back gives an equal document."""
    out = io.StringIO()
    out.write("[run]\n")
    for k, v in run_dict(doc.run).items():
        v = ",".join(v) if k == "solvers" else format_value(v)
        out.write(f"{k} = {v}\n")
    out.write("\n[system]\n")
    sd = system_dict(doc.system)
    for k in _SYSTEM_FIELDS:
        out.write(f"{k} = {format_value(sd[k])}\n")
    out.write("\n[kernel]\n")
    out.write(f"id = {doc.kernel.id}\n")
    for k, v in doc.kernel.params.items():
        out.write(f"{k} = {format_value(v)}\n")
    return out.getvalue()


def write_rows(path, header, rows) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format_value(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_csv(report, path) -> None:
    """Write a sweep report as CSV plus a ``.json`` metadata sidecar."""
    write_rows(path, report.header(), report.csv_rows())
    meta_path = Path(str(path) + ".json")
    try:
        meta_path.write_text(json.dumps(report.sidecar(), indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {meta_path}: {exc}") from exc


def _parse_cell(s: str):
    if s == "":
        return None
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def read_csv(path):
    """Parse a CSV written by this module into ``(header, rows)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[_parse_cell(c) for c in row] for row in r]
    return header, rows
