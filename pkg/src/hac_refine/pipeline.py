"""Stage drivers behind the CLI subcommands.

Case layout (one directory per case under paths.input_dir):

    <case>/ct.nii.gz  <case>/pet.nii.gz  [<case>/gt.nii.gz]
    <case>/prob_0.nii.gz .. prob_4.nii.gz

Stages write into paths.output_dir:

    preprocessed/<case>/...      crop -> resample -> z-score outputs
    uncertainty.csv              case_id,nsd_0..4,unc,flagged
    masks/<case>/refined.nii.gz  (+ ensemble.nii.gz when policy = both)
    diagnostics/<case>.json      solver trace for refined cases
    metrics.csv                  case_id,tp,fp,fn,dsc,precision,recall,nsd
    errors.json                  per-case failure records of the run

Cases run on a bounded thread pool; every file is written atomically
(temp + rename) and report rows are emitted case-sorted, so outputs are
byte-identical regardless of worker count or completion order.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import CollapseError, EmptyInputError, HacRefineError
from .grid import Indicator, ProbabilityMap, binarize
from .hybrid_ac import refine
from .metrics import CaseMetrics, aggregate, confusion, dsc, precision, recall
from .nifti import read_bbox_csv, read_nifti, write_nifti
from .phantom import MemberPerturbation, PhantomSpec, make_phantom
from .preprocess import crop_world, resample, zscore
from .uncertainty import EnsemblePrediction, nsd_total, uncertainty_score

N_MEMBERS = 5
SEED_ENV = "HAC_REFINE_SEED"

IMAGE_FILES = ("pet", "ct")
_FLOAT = repr  # shortest round-trip decimal, parses back to the same float


@dataclass(frozen=True)
class CaseError:
    stage: str
    case_id: str
    error: str
    message: str

    def as_dict(self):
        return {
            "stage": self.stage,
            "case_id": self.case_id,
            "error": self.error,
            "message": self.message,
        }


def _case_dirs(root):
    root = Path(root)
    if not root.is_dir():
        raise EmptyInputError(f"input directory {root} does not exist")
    return sorted(p.name for p in root.iterdir() if p.is_dir())


def _find_nifti(case_dir, stem):
    for suffix in (".nii.gz", ".nii"):
        path = case_dir / f"{stem}{suffix}"
        if path.exists():
            return path
    raise FileNotFoundError(f"{case_dir / stem}.nii[.gz] not found")


def _write_nifti_atomic(volume, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(".tmp-" + path.name)
    write_nifti(volume, tmp)
    os.replace(tmp, path)


def _write_text_atomic(text, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(".tmp-" + path.name)
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _run_cases(case_ids, worker, jobs, verbose, stage):
    """Run worker(case_id) over a bounded pool; collect results and errors."""
    errors = []
    results = {}
    workers = max(1, jobs or os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for case_id, outcome in zip(case_ids, pool.map(worker, case_ids)):
            if isinstance(outcome, CaseError):
                errors.append(outcome)
                if verbose:
                    print(f"[{stage}] {case_id}: ERROR {outcome.message}")
            else:
                results[case_id] = outcome
                if verbose:
                    print(f"[{stage}] {case_id}: ok")
    return results, errors


def _guarded(stage, case_id, fn):
    try:
        return fn()
    except (HacRefineError, FileNotFoundError, ValueError) as exc:
        return CaseError(stage, case_id, type(exc).__name__, str(exc))


def _bbox_table(cfg: PipelineConfig):
    if cfg.paths.bbox_csv is None:
        return None
    return {box.patient_id: box for box in read_bbox_csv(cfg.paths.bbox_csv)}


def run_preprocess(cfg: PipelineConfig, jobs=None, verbose=False):
    """Crop to the case bbox, resample isotropically, z-score pet and ct."""
    in_root = Path(cfg.paths.input_dir)
    out_root = Path(cfg.paths.output_dir) / "preprocessed"
    boxes = _bbox_table(cfg)
    case_ids = _case_dirs(in_root)

    def work(case_id):
        def task():
            case_dir = in_root / case_id
            box = None
            if boxes is not None:
                if case_id not in boxes:
                    raise FileNotFoundError(
                        f"no bbox row for {case_id} in {cfg.paths.bbox_csv}"
                    )
                box = boxes[case_id]

            def load(stem):
                vol = read_nifti(_find_nifti(case_dir, stem))
                return crop_world(vol, box) if box is not None else vol

            out_dir = out_root / case_id
            for stem in IMAGE_FILES:
                vol = resample(load(stem), cfg.target_spacing, order="spline3")
                _write_nifti_atomic(zscore(vol), out_dir / f"{stem}.nii.gz")
            for i in range(N_MEMBERS):
                vol = resample(load(f"prob_{i}"), cfg.target_spacing, order="spline3")
                prob = ProbabilityMap(vol.meta, np.clip(vol.data, 0.0, 1.0))
                _write_nifti_atomic(prob, out_dir / f"prob_{i}.nii.gz")
            try:
                gt_path = _find_nifti(case_dir, "gt")
            except FileNotFoundError:
                gt_path = None
            if gt_path is not None:
                gt_vol = load("gt")
                gt = Indicator(gt_vol.meta, (gt_vol.data >= 0.5).astype(np.uint8))
                gt = resample(gt, cfg.target_spacing, order="nearest")
                _write_nifti_atomic(gt.to_volume(), out_dir / "gt.nii.gz")
            return case_id

        return _guarded("preprocess", case_id, task)

    _, errors = _run_cases(case_ids, work, jobs, verbose, "preprocess")
    return errors


def _load_preprocessed_case(root, case_id):
    case_dir = Path(root) / "preprocessed" / case_id
    pet = read_nifti(_find_nifti(case_dir, "pet"))
    ct = read_nifti(_find_nifti(case_dir, "ct"))
    members = []
    for i in range(N_MEMBERS):
        vol = read_nifti(_find_nifti(case_dir, f"prob_{i}"))
        members.append(ProbabilityMap(vol.meta, np.clip(vol.data, 0.0, 1.0)))
    return pet, ct, tuple(members)


def _uncertainty_csv_path(cfg):
    return Path(cfg.paths.output_dir) / "uncertainty.csv"


def run_uncertainty(cfg: PipelineConfig, jobs=None, verbose=False):
    """Score every preprocessed case and write uncertainty.csv."""
    out_root = Path(cfg.paths.output_dir)
    case_ids = _case_dirs(out_root / "preprocessed")
    gate = cfg.uncertainty

    def work(case_id):
        def task():
            _, _, members = _load_preprocessed_case(out_root, case_id)
            pred = EnsemblePrediction.from_members(members)
            return uncertainty_score(
                pred,
                tol_mm=gate.tol_mm,
                bin_thresh=gate.bin_thresh,
                threshold=gate.threshold,
                case_id=case_id,
            )

        return _guarded("uncertainty", case_id, task)

    reports, errors = _run_cases(case_ids, work, jobs, verbose, "uncertainty")

    lines = ["case_id,nsd_0,nsd_1,nsd_2,nsd_3,nsd_4,unc,flagged"]
    for case_id in sorted(reports):
        r = reports[case_id]
        nsd_cols = ",".join(_FLOAT(v) for v in r.nsd_per_member)
        flag = "true" if r.flagged else "false"
        lines.append(f"{case_id},{nsd_cols},{_FLOAT(r.unc)},{flag}")
    _write_text_atomic("\n".join(lines) + "\n", _uncertainty_csv_path(cfg))
    return errors


def _read_flag_table(cfg):
    path = _uncertainty_csv_path(cfg)
    if not path.exists():
        raise EmptyInputError(f"{path} not found; run the uncertainty stage first")
    flags = {}
    with open(path, "r", encoding="utf-8") as fh:
        next(fh)  # header
        for line in fh:
            parts = line.strip().split(",")
            if parts and parts[0]:
                flags[parts[0]] = parts[-1] == "true"
    return flags


def run_refine(cfg: PipelineConfig, jobs=None, verbose=False):
    """Refine flagged cases from the fused-mean mask; copy it otherwise."""
    out_root = Path(cfg.paths.output_dir)
    flags = _read_flag_table(cfg)
    case_ids = _case_dirs(out_root / "preprocessed")
    gate = cfg.uncertainty
    write_both = cfg.output.policy == "both"

    def work(case_id):
        def task():
            pet, ct, members = _load_preprocessed_case(out_root, case_id)
            fused = EnsemblePrediction.from_members(members).fused
            ensemble_mask = binarize(fused, gate.bin_thresh)
            mask_dir = out_root / "masks" / case_id
            if write_both:
                _write_nifti_atomic(ensemble_mask.to_volume(), mask_dir / "ensemble.nii.gz")

            flagged = flags.get(case_id, False)
            collapse = None
            if flagged:
                try:
                    refined, diag = refine(pet, ct, fused, ensemble_mask, cfg.hybrid_ac)
                except CollapseError as exc:
                    collapse = exc
                    refined, diag = ensemble_mask, exc.diagnostics
                payload = {"case_id": case_id, "flagged": True, "refined": collapse is None}
                payload.update(diag.to_dict())
                _write_text_atomic(
                    json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    out_root / "diagnostics" / f"{case_id}.json",
                )
            else:
                refined = ensemble_mask
            _write_nifti_atomic(refined.to_volume(), mask_dir / "refined.nii.gz")
            if collapse is not None:
                return CaseError("refine", case_id, "CollapseError", str(collapse))
            return case_id

        return _guarded("refine", case_id, task)

    _, errors = _run_cases(case_ids, work, jobs, verbose, "refine")
    return errors


def run_evaluate(cfg: PipelineConfig, jobs=None, verbose=False):
    """Compare refined masks against ground truth; write metrics.csv."""
    out_root = Path(cfg.paths.output_dir)
    case_ids = _case_dirs(out_root / "masks")
    gate = cfg.uncertainty

    def work(case_id):
        def task():
            mask_vol = read_nifti(_find_nifti(out_root / "masks" / case_id, "refined"))
            pred = Indicator(mask_vol.meta, (mask_vol.data >= 0.5).astype(np.uint8))
            gt_vol = read_nifti(
                _find_nifti(out_root / "preprocessed" / case_id, "gt")
            )
            gt = Indicator(gt_vol.meta, (gt_vol.data >= 0.5).astype(np.uint8))
            tp, fp, fn = confusion(pred, gt)
            return {
                "tp": tp,
                "fp": fp,
                "fn": fn,
                "metrics": CaseMetrics(
                    case_id=case_id,
                    dsc=dsc(pred, gt),
                    precision=precision(pred, gt),
                    recall=recall(pred, gt),
                    nsd=nsd_total(pred, gt, gate.tol_mm),
                ),
            }

        return _guarded("evaluate", case_id, task)

    rows, errors = _run_cases(case_ids, work, jobs, verbose, "evaluate")
    if not rows:
        raise EmptyInputError("no cases could be evaluated")

    lines = ["case_id,tp,fp,fn,dsc,precision,recall,nsd"]
    ordered = [rows[c] for c in sorted(rows)]
    for row in ordered:
        m = row["metrics"]
        lines.append(
            f"{m.case_id},{row['tp']},{row['fp']},{row['fn']},"
            f"{_FLOAT(m.dsc)},{_FLOAT(m.precision)},{_FLOAT(m.recall)},{_FLOAT(m.nsd)}"
        )
    mean = aggregate([row["metrics"] for row in ordered])
    lines.append(
        f"MEAN,,,,{_FLOAT(mean.dsc)},{_FLOAT(mean.precision)},"
        f"{_FLOAT(mean.recall)},{_FLOAT(mean.nsd)}"
    )
    _write_text_atomic("\n".join(lines) + "\n", out_root / "metrics.csv")
    return errors


def _member_perturbations(pcfg, case_index):
    """Deterministic per-case lesion jitter from (seed, case index)."""
    seq = np.random.SeedSequence(entropy=pcfg.seed, spawn_key=(case_index,))
    rng = np.random.Generator(np.random.Philox(seq))
    perts = []
    lo, hi = pcfg.member_radius_scale
    for _ in range(N_MEMBERS):
        direction = rng.normal(size=3)
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            direction, norm = np.array([1.0, 0.0, 0.0]), 1.0
        shift = tuple(float(x) for x in direction / norm * pcfg.member_shift_mm)
        perts.append(
            MemberPerturbation(shift_mm=shift, radius_scale=float(rng.uniform(lo, hi)))
        )
    return tuple(perts)


def run_phantom(cfg: PipelineConfig, jobs=None, verbose=False):
    """Generate a synthetic cohort into paths.input_dir."""
    pcfg = cfg.phantom
    seed = int(os.environ.get(SEED_ENV, pcfg.seed))
    in_root = Path(cfg.paths.input_dir)
    center = pcfg.center_mm
    if center is None:
        center = tuple((n - 1) * s / 2.0 for n, s in zip(pcfg.shape, pcfg.spacing))

    case_ids = [f"case_{i:03d}" for i in range(pcfg.n_cases)]
    case_index = {cid: i for i, cid in enumerate(case_ids)}

    def work(case_id):
        def task():
            index = case_index[case_id]
            spec = PhantomSpec(
                shape=pcfg.shape,
                spacing=pcfg.spacing,
                center_mm=center,
                radii_mm=(pcfg.radius_mm,) * 3,
                pet_contrast=pcfg.pet_contrast,
                noise_sigma=pcfg.noise_sigma,
                ct_edge_strength=pcfg.ct_edge_strength,
                prob_blur_sigma=pcfg.prob_blur_sigma,
                member_perturbations=_member_perturbations(pcfg, index),
                seed=seed + index,
            )
            case = make_phantom(spec)
            case_dir = in_root / case_id
            _write_nifti_atomic(case.pet, case_dir / "pet.nii.gz")
            _write_nifti_atomic(case.ct, case_dir / "ct.nii.gz")
            _write_nifti_atomic(case.gt.to_volume(), case_dir / "gt.nii.gz")
            for i, member in enumerate(case.members):
                _write_nifti_atomic(member, case_dir / f"prob_{i}.nii.gz")
            return case_id

        return _guarded("phantom", case_id, task)

    _, errors = _run_cases(case_ids, work, jobs, verbose, "phantom")
    return errors


def run_pipeline(cfg: PipelineConfig, jobs=None, verbose=False):
    """preprocess -> uncertainty -> refine -> evaluate, accumulating errors."""
    errors = []
    errors += run_preprocess(cfg, jobs, verbose)
    errors += run_uncertainty(cfg, jobs, verbose)
    errors += run_refine(cfg, jobs, verbose)
    errors += run_evaluate(cfg, jobs, verbose)
    return errors


def write_error_report(errors, cfg: PipelineConfig):
    """Persist the run's per-case error records (deterministic order)."""
    records = sorted(
        (e.as_dict() for e in errors), key=lambda r: (r["stage"], r["case_id"])
    )
    _write_text_atomic(
        json.dumps(records, indent=2, sort_keys=True) + "\n",
        Path(cfg.paths.output_dir) / "errors.json",
    )
