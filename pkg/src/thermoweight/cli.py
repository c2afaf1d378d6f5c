"""Command-line front end: ``thermoweight <command> --input job.json --out report.json``.

Exit status 0 on success, 2 on invalid input, 3 when a resource cap aborts.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .equilibrium import (
    CylinderTable,
    conditional_equilibrium,
    entropy_and_objective,
    equilibrium_measure,
    gibbs_diagnostic,
    mixing_diagnostic,
    phi_tilde,
)
from .oracle import MarkovMeasure, closed_form_full_shift, variational_sweep
from .potentials import (
    ConstantPotential,
    LocallyConstantPotential,
    MatrixProductPotential,
    Potential,
)
from .pressure import base_constants, weighted_pressure
from .sponge import SpongeSpec, build_sponge_chain, mcmullen_oracle, sponge_dimension
from .symbolic import (
    DEFAULT_ALPHABET_CAP,
    DEFAULT_WORD_CAP,
    FactorChain,
    FactorMap,
    ResourceCapError,
    Sft,
    ValidationError,
    enumerate_language,
    language_size,
    ranker,
    specification_gaps,
    validate_chain,
)

COMMANDS = ("pressure", "equilibrium", "conditional", "dimension", "check", "oracle")
EXIT_OK, EXIT_INVALID, EXIT_RESOURCE = 0, 2, 3


@dataclass
class JobSpec:
    command: str
    document: dict
    n: int
    d: int
    threads: int = 1

    def to_dict(self) -> dict:
        return {"command": self.command, "n": self.n, "d": self.d, "threads": self.threads, "document": self.document}

    @classmethod
    def from_dict(cls, data: dict) -> "JobSpec":
        return cls(data["command"], data["document"], int(data["n"]), int(data["d"]), int(data.get("threads", 1)))

    @property
    def word_cap(self) -> int:
        return int(self.document.get("caps", {}).get("words", DEFAULT_WORD_CAP))

    @property
    def alphabet_cap(self) -> int:
        return int(self.document.get("caps", {}).get("alphabet", DEFAULT_ALPHABET_CAP))


# ---------------------------------------------------------------------------
# parsing


def _matrix(raw, label: str) -> np.ndarray:
    if not isinstance(raw, list) or not raw:
        raise ValidationError(f"{label}: expected a nonempty list of rows")
    size = len(raw)
    for r, row in enumerate(raw):
        if not isinstance(row, list):
            raise ValidationError(f"{label} row {r}: not a list")
        if len(row) != size:
            raise ValidationError(f"{label} row {r}: expected {size} entries, got {len(row)}")
        for v in row:
            if v not in (0, 1) or isinstance(v, bool):
                raise ValidationError(f"{label} row {r}: entry {v!r} is not 0 or 1")
    return np.array(raw, dtype=int)


@dataclass
class ParsedChain:
    chain: FactorChain
    names: list
    potential: Potential
    log: list = field(default_factory=list)

    def word_name(self, level: int, word) -> str:
        names = self.names[level]
        parts = [names[int(s)] for s in word]
        return "".join(parts) if all(len(p) == 1 for p in parts) else " ".join(parts)

    def parse_word(self, level: int, text) -> list:
        names = self.names[level]
        if isinstance(text, list):
            tokens = text
        elif str(text) in names or " " in text:
            tokens = str(text).split()
        else:
            tokens = list(text)
        try:
            return [names.index(str(t)) for t in tokens]
        except ValueError:
            raise ValidationError(f"word {text!r} uses a symbol outside level {level + 1}")


def parse_chain(doc: dict) -> ParsedChain:
    if "transitions" not in doc:
        raise ValidationError("input needs 'transitions' (one 0/1 matrix per level)")
    mats = [_matrix(m, f"transitions[{i}]") for i, m in enumerate(doc["transitions"])]
    k = len(mats)
    alphabets = doc.get("alphabets") or [[str(s) for s in range(len(m))] for m in mats]
    if len(alphabets) != k:
        raise ValidationError(f"{k} transition matrices but {len(alphabets)} alphabets")
    names = []
    for i, (alpha, m) in enumerate(zip(alphabets, mats)):
        alpha = [str(s) for s in alpha]
        if len(alpha) != len(m):
            raise ValidationError(f"alphabets[{i}] has {len(alpha)} symbols, transitions[{i}] has {len(m)} rows")
        names.append(alpha)
    levels = [Sft(m, name=f"level{i + 1}") for i, m in enumerate(mats)]
    log = []
    for i, lvl in enumerate(levels):
        if lvl.normalization_log:
            raise ValidationError(f"level {i + 1} is not essential: " + "; ".join(lvl.normalization_log))
    raw_maps = doc.get("factor_maps", [])
    if len(raw_maps) != k - 1:
        raise ValidationError(f"{k} levels need {k - 1} factor maps, got {len(raw_maps)}")
    maps = []
    for i, fm in enumerate(raw_maps):
        if len(fm) != levels[i].size:
            raise ValidationError(f"factor_maps[{i}] has {len(fm)} entries, level {i + 1} has {levels[i].size} symbols")
        sm = []
        for s in fm:
            if isinstance(s, str):
                if s not in names[i + 1]:
                    raise ValidationError(f"factor_maps[{i}] names unknown target symbol {s!r}")
                sm.append(names[i + 1].index(s))
            else:
                sm.append(int(s))
        maps.append(FactorMap(levels[i], levels[i + 1], np.array(sm)))
    weights = doc.get("weights", [1.0] * k)
    chain = FactorChain(levels, maps, weights)
    pc = ParsedChain(chain, names, ConstantPotential(levels[0]), log)
    pc.potential = parse_potential(doc.get("potential", {"kind": "constant"}), pc)
    return pc


def parse_potential(spec: dict, pc: ParsedChain) -> Potential:
    X = pc.chain.levels[0]
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return ConstantPotential(X)
    if kind == "locally_constant":
        w = int(spec.get("window", 1))
        if "values" in spec:
            return LocallyConstantPotential(X, w, np.asarray(spec["values"], dtype=float))
        table = spec.get("table")
        if not isinstance(table, dict):
            raise ValidationError("locally_constant potential needs 'table' or 'values'")
        mapping = {}
        for key, val in table.items():
            word = tuple(pc.parse_word(0, key))
            if len(word) != w:
                raise ValidationError(f"potential table key {key!r} is not a window of length {w}")
            mapping[word] = float(val)
        return LocallyConstantPotential.from_mapping(X, w, mapping)
    if kind == "matrix_product":
        return MatrixProductPotential(X, np.asarray(spec["matrices"], dtype=float))
    raise ValidationError(f"unknown potential kind {kind!r}")


def parse_sponge(doc: dict) -> tuple[SpongeSpec, list]:
    sp = doc.get("sponge")
    if not isinstance(sp, dict) or "bases" not in sp or "digits" not in sp:
        raise ValidationError("input needs 'sponge' with 'bases' and 'digits'")
    sft = sp.get("sft")
    if sft is not None:
        sft = _matrix(sft, "sponge.sft").tolist()
    return SpongeSpec.sorted_from(sp["bases"], sp["digits"], sft)


def parse_nu(spec, pc: ParsedChain, n: int) -> CylinderTable:
    Y = pc.chain.levels[1]
    if spec is None or spec == "uniform":
        return CylinderTable.uniform(Y, n)
    if "bernoulli" in spec:
        if not Y.is_full:
            raise ValidationError("a Bernoulli law for nu needs a full-shift factor")
        probs = np.asarray(spec["bernoulli"], dtype=float)
        words = enumerate_language(Y, n).astype(np.int64)
        return CylinderTable(Y, n, np.prod(probs[words], axis=1))
    if "point" in spec:
        block = pc.parse_word(1, spec["point"])
        word = (block * (n // len(block) + 1))[:n]
        return CylinderTable.point(Y, word)
    if "masses" in spec:
        m = np.zeros(language_size(Y, n))
        for key, val in spec["masses"].items():
            w = pc.parse_word(1, key)
            if len(w) != n or not Y.is_legal(w):
                raise ValidationError(f"nu word {key!r} is not in L_{n}")
            m[ranker(Y, n).rank_one(w)] = float(val)
        if abs(m.sum() - 1.0) > 1e-9:
            raise ValidationError("nu masses must sum to 1")
        return CylinderTable(Y, n, m)
    raise ValidationError("nu must be 'uniform' or have 'bernoulli', 'point' or 'masses'")


# ---------------------------------------------------------------------------
# commands


def _table_rows(mu: CylinderTable, namer) -> list:
    rows = []
    for j in range(1, mu.depth + 1):
        tab = mu.marginal(j)
        for w, m in zip(tab.words(), tab.masses):
            rows.append([j, namer(w), float(m)])
    return rows


def _gaps(raw) -> list:
    if raw is None:
        return list(range(2, 9))
    if len(raw) == 2:
        return list(range(int(raw[0]), int(raw[1]) + 1))
    return [int(g) for g in raw]


def cmd_check(job: JobSpec) -> tuple[dict, list]:
    doc = job.document
    out: dict = {}
    if "sponge" in doc and "transitions" not in doc:
        spec, perm = parse_sponge(doc)
        chain = build_sponge_chain(spec, min(job.d + 2, 6), job.word_cap).chain
        names = None
        out["permutation"] = perm
    else:
        pc = parse_chain(doc)
        chain = pc.chain
        report = validate_chain(chain, max(job.d, 1), job.word_cap)
        out["validation"] = {"depth": report.depth, "checked": report.checked, "log": report.log}
    levels = []
    for i, lvl in enumerate(chain.levels):
        weak, exact = specification_gaps(lvl)
        levels.append({"level": i + 1, "size": lvl.size, "weak_p": weak, "exact_p": exact})
    out["levels"] = levels
    out["weak_p"], out["exact_p"] = levels[0]["weak_p"], levels[0]["exact_p"]
    return out, []


def cmd_pressure(job: JobSpec) -> tuple[dict, list]:
    pc = parse_chain(job.document)
    validate_chain(pc.chain, min(job.n, 4), job.word_cap)
    wp = weighted_pressure(pc.chain, pc.potential, job.n, cap=job.word_cap, threads=job.threads)
    return {"pressure": wp.as_dict()}, []


def cmd_equilibrium(job: JobSpec) -> tuple[dict, list]:
    doc = job.document
    pc = parse_chain(doc)
    chain, phi = pc.chain, pc.potential
    validate_chain(chain, min(job.n, 4), job.word_cap)
    wp = weighted_pressure(chain, phi, job.n, cap=job.word_cap, threads=job.threads)
    mu = equilibrium_measure(chain, phi, wp, job.d, cap=job.word_cap, threads=job.threads)
    out = {"pressure": wp.as_dict(), "normalization_error": mu.normalization_error}
    consts = base_constants(phi)
    out["base_constants"] = consts.as_dict()
    out["objective"] = entropy_and_objective(chain, mu, phi, consts).as_dict()
    wpd = weighted_pressure(chain, phi, job.d, constants=wp.constants, cap=job.word_cap)
    g = gibbs_diagnostic(mu, phi_tilde(chain, phi, wpd, cap=job.word_cap))
    out["gibbs"] = {"depth": g.depth, "min_ratio": g.min_ratio, "max_ratio": g.max_ratio, "spread": g.spread}
    mix = doc.get("mixing")
    if mix:
        A = pc.parse_word(0, mix["A"])
        B = pc.parse_word(0, mix["B"])
        mr = mixing_diagnostic(mu, A, B, int(mix.get("p", 0)), _gaps(mix.get("gaps")), bool(mix.get("exact", False)))
        out["mixing"] = {"gaps": list(mr.gaps), "ratios": list(mr.ratios), "min_ratio": mr.min_ratio, "decaying": mr.decaying}
    return out, _table_rows(mu, lambda w: pc.word_name(0, w))


def cmd_conditional(job: JobSpec) -> tuple[dict, list]:
    doc = job.document
    pc = parse_chain(doc)
    if pc.chain.k < 2:
        raise ValidationError("conditional needs a chain with at least two levels")
    validate_chain(pc.chain, min(job.n, 4), job.word_cap)
    nu = parse_nu(doc.get("conditional", {}).get("nu", "uniform"), pc, job.n)
    res = conditional_equilibrium(pc.chain.maps[0], pc.potential, nu, job.d, job.word_cap, job.threads)
    return {"conditional": res.as_dict()}, _table_rows(res.measure, lambda w: pc.word_name(0, w))


def cmd_dimension(job: JobSpec) -> tuple[dict, list]:
    spec, perm = parse_sponge(job.document)
    res = sponge_dimension(spec, job.n, job.d, cap=job.word_cap, threads=job.threads)
    digits = res.sponge.level_digits[0]
    namer = lambda w: " ".join("(" + ",".join(str(x) for x in digits[int(s)]) + ")" for s in w)  # noqa: E731
    out = {
        "bases": list(spec.bases),
        "permutation": perm,
        "weights": list(res.weights),
        "dimension": res.pressure.as_dict(),
        "normalization_error": res.measure.normalization_error,
    }
    return out, _table_rows(res.measure, namer)


def cmd_oracle(job: JobSpec) -> tuple[dict, list]:
    doc = job.document
    out: dict = {}
    if "sponge" in doc and "transitions" not in doc:
        spec, perm = parse_sponge(doc)
        out["mcmullen"] = mcmullen_oracle(spec)
        return out, []
    pc = parse_chain(doc)
    chain, phi = pc.chain, pc.potential
    if chain.k == 2 and all(l.is_full for l in chain.levels) and isinstance(phi, ConstantPotential):
        sizes = np.bincount(chain.maps[0].symbol_map, minlength=chain.levels[1].size)
        val, w = closed_form_full_shift(sizes, chain.weights)
        out["closed_form"] = {"value": val, "fiber_sizes": sizes.tolist(), "fiber_weights": w.tolist()}
    opts = doc.get("oracle", {})
    seed = int(opts.get("seed", 0))
    count = int(opts.get("candidates", 100))
    order = int(opts.get("order", 1))
    rng = np.random.default_rng(seed)
    cands = [MarkovMeasure.random(chain.levels[0], order, rng) for _ in range(count)]
    wp = weighted_pressure(chain, phi, job.n, cap=job.word_cap, threads=job.threads)
    mu = equilibrium_measure(chain, phi, wp, job.d, cap=job.word_cap, threads=job.threads)
    rep = variational_sweep(chain, phi, cands, job.d, wp.bracket, base_constants(phi), mu, seed)
    out["pressure"] = wp.as_dict()
    out["sweep"] = rep.as_dict()
    return out, []


HANDLERS = {
    "check": cmd_check,
    "pressure": cmd_pressure,
    "equilibrium": cmd_equilibrium,
    "conditional": cmd_conditional,
    "dimension": cmd_dimension,
    "oracle": cmd_oracle,
}


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def render_report(job: JobSpec, result: dict) -> str:
    report = {"version": __version__, "command": job.command, "input": job.to_dict(), "result": result}
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def run(job: JobSpec, out_path: str, csv_path: Optional[str] = None) -> int:
    result, rows = HANDLERS[job.command](job)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(render_report(job, result))
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["depth", "word", "mass"])
            for r in rows:
                wr.writerow([r[0], r[1], repr(float(r[2]))])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thermoweight", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--input", required=True, help="JSON job document")
    ap.add_argument("--out", required=True, help="JSON report path")
    ap.add_argument("--csv", help="CSV path for cylinder tables (depth, word, mass)")
    ap.add_argument("--n", type=int, help="depth of the pressure computation")
    ap.add_argument("--d", type=int, help="depth of the measure table")
    ap.add_argument("--threads", type=int, default=1, help="worker cap")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.input, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValidationError("input must be a JSON object")
        depths = doc.get("depths", {})
        n = args.n if args.n is not None else int(depths.get("n", 12))
        d = args.d if args.d is not None else int(depths.get("d", 2))
        if n < 1 or d < 1:
            raise ValidationError("depths must be positive")
        if args.command in ("equilibrium", "conditional", "dimension", "oracle") and 2 * d > n:
            raise ValidationError(f"need d <= n/2, got n={n}, d={d}")
        job = JobSpec(args.command, doc, n, d, max(1, args.threads))
        return run(job, args.out, args.csv)
    except ResourceCapError as exc:
        print(f"thermoweight: resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except MemoryError:
        print("thermoweight: resource cap: out of memory", file=sys.stderr)
        return EXIT_RESOURCE
    except (ValueError, KeyError, TypeError, json.JSONDecodeError, OSError) as exc:
        print(f"thermoweight: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
