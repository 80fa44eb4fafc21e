"""CLI and stage-driver tests on small phantom cohorts."""

import json
import os
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from hac_refine.cli import main
from hac_refine.config import load_config
from hac_refine.grid import Indicator, binarize
from hac_refine.metrics import dsc
from hac_refine.nifti import read_nifti
from hac_refine.pipeline import run_preprocess, run_uncertainty
from hac_refine.uncertainty import EnsemblePrediction


def write_config(tmp_path, **overrides):
    data = {
        "paths": {
            "input_dir": str(tmp_path / "cases"),
            "output_dir": str(tmp_path / "out"),
        },
        "phantom": {
            "n_cases": 2,
            "seed": 11,
            "shape": [40, 40, 40],
            "radius_mm": 9.0,
            "member_shift_mm": 2.0,
        },
        "hybrid_ac": {"max_iter": 20},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and key in data:
            data[key].update(value)
        else:
            data[key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data, indent=1))
    return path


def invoke(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def tree_bytes(root):
    """Map of relative path -> file bytes for a directory tree."""
    root = Path(root)
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    """A generated-and-pipelined phantom cohort shared by read-only tests."""
    tmp_path = tmp_path_factory.mktemp("cohort")
    cfg_path = write_config(tmp_path)
    assert invoke("phantom", "--config", str(cfg_path)).exit_code == 0
    assert invoke("pipeline", "--config", str(cfg_path)).exit_code == 0
    return tmp_path, cfg_path


class TestPhantomCommand:
    def test_layout_and_determinism(self, tmp_path):
        cfg_path = write_config(tmp_path, phantom={"n_cases": 1})
        assert invoke("phantom", "--config", str(cfg_path)).exit_code == 0
        case = tmp_path / "cases" / "case_000"
        names = sorted(p.name for p in case.iterdir())
        assert names == sorted(
            ["pet.nii.gz", "ct.nii.gz", "gt.nii.gz"]
            + [f"prob_{i}.nii.gz" for i in range(5)]
        )
        before = tree_bytes(tmp_path / "cases")
        assert invoke("phantom", "--config", str(cfg_path)).exit_code == 0
        assert tree_bytes(tmp_path / "cases") == before

    def test_seed_env_override(self, tmp_path, monkeypatch):
        cfg_path = write_config(tmp_path, phantom={"n_cases": 1})
        assert invoke("phantom", "--config", str(cfg_path)).exit_code == 0
        baseline = tree_bytes(tmp_path / "cases")
        monkeypatch.setenv("HAC_REFINE_SEED", "999")
        assert invoke("phantom", "--config", str(cfg_path)).exit_code == 0
        assert tree_bytes(tmp_path / "cases") != baseline


class TestPreprocessCommand:
    def test_resample_doubles_shape_from_2mm(self, tmp_path):
        cfg_path = write_config(
            tmp_path,
            phantom={"n_cases": 1, "shape": [24, 24, 24], "spacing": [2.0, 2.0, 2.0],
                     "radius_mm": 10.0},
        )
        assert invoke("phantom", "--config", str(cfg_path)).exit_code == 0
        assert invoke("preprocess", "--config", str(cfg_path)).exit_code == 0
        out = read_nifti(tmp_path / "out" / "preprocessed" / "case_000" / "pet.nii.gz")
        assert out.meta.shape == (48, 48, 48)
        assert out.meta.spacing == (1.0, 1.0, 1.0)

    def test_gt_stays_binary_and_images_zscored(self, cohort):
        tmp_path, _ = cohort
        case = tmp_path / "out" / "preprocessed" / "case_000"
        gt = read_nifti(case / "gt.nii.gz")
        assert set(np.unique(gt.data)) <= {0.0, 1.0}
        pet = read_nifti(case / "pet.nii.gz")
        assert abs(pet.data.mean()) < 1e-5
        assert abs(pet.data.std() - 1.0) < 1e-3
        prob = read_nifti(case / "prob_0.nii.gz")
        assert prob.data.min() >= 0.0
        assert prob.data.max() <= 1.0

    def test_missing_pet_is_per_case_error(self, tmp_path):
        cfg_path = write_config(tmp_path, phantom={"n_cases": 2})
        assert invoke("phantom", "--config", str(cfg_path)).exit_code == 0
        (tmp_path / "cases" / "case_001" / "pet.nii.gz").unlink()
        result = invoke("preprocess", "--config", str(cfg_path))
        assert result.exit_code == 1
        records = json.loads((tmp_path / "out" / "errors.json").read_text())
        assert len(records) == 1
        assert records[0]["case_id"] == "case_001"
        assert records[0]["stage"] == "preprocess"
        # the healthy case still went through
        assert (tmp_path / "out" / "preprocessed" / "case_000" / "pet.nii.gz").exists()

    def test_bbox_crop_applied(self, tmp_path):
        cfg_path = write_config(
            tmp_path,
            phantom={"n_cases": 1, "shape": [40, 40, 40], "radius_mm": 9.0},
            paths={
                "input_dir": str(tmp_path / "cases"),
                "output_dir": str(tmp_path / "out"),
                "bbox_csv": str(tmp_path / "bbox.csv"),
            },
        )
        assert invoke("phantom", "--config", str(cfg_path)).exit_code == 0
        (tmp_path / "bbox.csv").write_text(
            "PatientID,x1,y1,z1,x2,y2,z2\ncase_000,6,6,6,34,34,34\n"
        )
        assert invoke("preprocess", "--config", str(cfg_path)).exit_code == 0
        out = read_nifti(tmp_path / "out" / "preprocessed" / "case_000" / "pet.nii.gz")
        assert out.meta.shape == (28, 28, 28)
        assert out.meta.origin == (6.0, 6.0, 6.0)

    def test_bbox_row_missing_is_error(self, tmp_path):
        cfg_path = write_config(
            tmp_path,
            phantom={"n_cases": 1},
            paths={
                "input_dir": str(tmp_path / "cases"),
                "output_dir": str(tmp_path / "out"),
                "bbox_csv": str(tmp_path / "bbox.csv"),
            },
        )
        assert invoke("phantom", "--config", str(cfg_path)).exit_code == 0
        (tmp_path / "bbox.csv").write_text("PatientID,x1,y1,z1,x2,y2,z2\n")
        assert invoke("preprocess", "--config", str(cfg_path)).exit_code == 1


class TestUncertaintyCommand:
    def test_report_schema_and_gating(self, cohort):
        tmp_path, cfg_path = cohort
        lines = (tmp_path / "out" / "uncertainty.csv").read_text().splitlines()
        assert lines[0] == "case_id,nsd_0,nsd_1,nsd_2,nsd_3,nsd_4,unc,flagged"
        rows = [ln.split(",") for ln in lines[1:]]
        assert [r[0] for r in rows] == ["case_000", "case_001"]
        for r in rows:
            unc = float(r[6])
            assert (r[7] == "true") == (unc > 0.2)

    def test_zero_perturbation_cohort_not_flagged(self, tmp_path):
        cfg_path = write_config(
            tmp_path,
            phantom={"n_cases": 1, "member_shift_mm": 0.0,
                     "member_radius_scale": [1.0, 1.0]},
        )
        assert invoke("phantom", "--config", str(cfg_path)).exit_code == 0
        assert invoke("preprocess", "--config", str(cfg_path)).exit_code == 0
        assert invoke("uncertainty", "--config", str(cfg_path)).exit_code == 0
        line = (tmp_path / "out" / "uncertainty.csv").read_text().splitlines()[1]
        assert line.endswith(",false")
        assert float(line.split(",")[6]) == 0.0

    def test_values_match_library(self, cohort):
        tmp_path, cfg_path = cohort
        cfg = load_config(cfg_path)
        errors = run_uncertainty(cfg, jobs=1)
        assert errors == []
        from hac_refine.pipeline import _load_preprocessed_case
        from hac_refine.uncertainty import uncertainty_score

        line = (tmp_path / "out" / "uncertainty.csv").read_text().splitlines()[1]
        parts = line.split(",")
        _, _, members = _load_preprocessed_case(tmp_path / "out", "case_000")
        rep = uncertainty_score(
            EnsemblePrediction.from_members(members), tol_mm=1.0, case_id="case_000"
        )
        assert [float(x) for x in parts[1:6]] == list(rep.nsd_per_member)
        assert float(parts[6]) == rep.unc


class TestRefineCommand:
    def test_masks_and_diagnostics(self, cohort):
        tmp_path, _ = cohort
        flags = {}
        for line in (tmp_path / "out" / "uncertainty.csv").read_text().splitlines()[1:]:
            parts = line.split(",")
            flags[parts[0]] = parts[-1] == "true"
        for case_id, flagged in flags.items():
            mask_dir = tmp_path / "out" / "masks" / case_id
            assert (mask_dir / "refined.nii.gz").exists()
            assert (mask_dir / "ensemble.nii.gz").exists()  # policy = both
            diag_path = tmp_path / "out" / "diagnostics" / f"{case_id}.json"
            assert diag_path.exists() == flagged
            if flagged:
                diag = json.loads(diag_path.read_text())
                trace = diag["energy_trace"]
                assert all(
                    e1 <= e0 + 1e-6 * abs(e0) for e0, e1 in zip(trace, trace[1:])
                )
                assert diag["refined"] is True

    def test_unflagged_copies_ensemble_mask(self, cohort):
        tmp_path, _ = cohort
        for line in (tmp_path / "out" / "uncertainty.csv").read_text().splitlines()[1:]:
            parts = line.split(",")
            if parts[-1] == "false":
                mask_dir = tmp_path / "out" / "masks" / parts[0]
                a = read_nifti(mask_dir / "refined.nii.gz")
                b = read_nifti(mask_dir / "ensemble.nii.gz")
                np.testing.assert_array_equal(a.data, b.data)

    def test_refined_only_policy_suppresses_ensemble(self, tmp_path):
        cfg_path = write_config(
            tmp_path,
            phantom={"n_cases": 1, "member_shift_mm": 0.0,
                     "member_radius_scale": [1.0, 1.0]},
            output={"policy": "refined-only"},
        )
        for cmd in ("phantom", "preprocess", "uncertainty", "refine"):
            assert invoke(cmd, "--config", str(cfg_path)).exit_code == 0
        mask_dir = tmp_path / "out" / "masks" / "case_000"
        assert (mask_dir / "refined.nii.gz").exists()
        assert not (mask_dir / "ensemble.nii.gz").exists()

    def test_refined_at_least_as_good_as_ensemble(self, cohort):
        tmp_path, _ = cohort
        for case_dir in sorted((tmp_path / "out" / "masks").iterdir()):
            case_id = case_dir.name
            gt_vol = read_nifti(tmp_path / "out" / "preprocessed" / case_id / "gt.nii.gz")
            gt = Indicator(gt_vol.meta, (gt_vol.data >= 0.5).astype(np.uint8))
            refined_vol = read_nifti(case_dir / "refined.nii.gz")
            refined = Indicator(refined_vol.meta, (refined_vol.data >= 0.5).astype(np.uint8))
            ens_vol = read_nifti(case_dir / "ensemble.nii.gz")
            ens = Indicator(ens_vol.meta, (ens_vol.data >= 0.5).astype(np.uint8))
            assert dsc(refined, gt) >= dsc(ens, gt) - 1e-12


class TestEvaluateCommand:
    def test_metrics_csv_schema(self, cohort):
        tmp_path, _ = cohort
        lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
        assert lines[0] == "case_id,tp,fp,fn,dsc,precision,recall,nsd"
        assert lines[-1].startswith("MEAN,")
        body = [ln.split(",") for ln in lines[1:-1]]
        assert [r[0] for r in body] == ["case_000", "case_001"]
        mean = lines[-1].split(",")
        dscs = [float(r[4]) for r in body]
        assert float(mean[4]) == pytest.approx(sum(dscs) / len(dscs), abs=1e-15)

    def test_perfect_prediction_rows(self, tmp_path):
        cfg_path = write_config(
            tmp_path,
            phantom={"n_cases": 1, "member_shift_mm": 0.0,
                     "member_radius_scale": [1.0, 1.0], "noise_sigma": 0.0,
                     "prob_blur_sigma": 0.8},
        )
        assert invoke("phantom", "--config", str(cfg_path)).exit_code == 0
        assert invoke("pipeline", "--config", str(cfg_path)).exit_code == 0
        lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
        row = lines[1].split(",")
        assert float(row[4]) == 1.0  # blur 0.8mm binarizes back to the sphere

    def test_missing_gt_skipped_with_record(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert invoke("phantom", "--config", str(cfg_path)).exit_code == 0
        for cmd in ("preprocess", "uncertainty", "refine"):
            assert invoke(cmd, "--config", str(cfg_path)).exit_code == 0
        (tmp_path / "out" / "preprocessed" / "case_001" / "gt.nii.gz").unlink()
        result = invoke("evaluate", "--config", str(cfg_path))
        assert result.exit_code == 1
        lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
        assert [ln.split(",")[0] for ln in lines[1:]] == ["case_000", "MEAN"]
        records = json.loads((tmp_path / "out" / "errors.json").read_text())
        assert records[0]["case_id"] == "case_001"

    def test_empty_cohort_exits_2(self, tmp_path):
        cfg_path = write_config(tmp_path)
        (tmp_path / "cases").mkdir()
        (tmp_path / "out" / "masks").mkdir(parents=True)
        result = invoke("evaluate", "--config", str(cfg_path))
        assert result.exit_code == 2


class TestPipelineCommand:
    def test_equals_sequential_stages(self, tmp_path):
        cfg_a = write_config(tmp_path)
        assert invoke("phantom", "--config", str(cfg_a)).exit_code == 0
        assert invoke("pipeline", "--config", str(cfg_a)).exit_code == 0
        combined = tree_bytes(tmp_path / "out")

        stage_dir = tmp_path / "stage-out"
        cfg_b = write_config(
            tmp_path,
            paths={"input_dir": str(tmp_path / "cases"), "output_dir": str(stage_dir)},
        )
        for cmd in ("preprocess", "uncertainty", "refine", "evaluate"):
            assert invoke(cmd, "--config", str(cfg_b)).exit_code == 0
        assert tree_bytes(stage_dir) == combined

    def test_usage_errors_exit_2(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"paths": {"input_dir": "x", "output_dir": "y"},
                                   "mystery": 1}))
        assert invoke("pipeline", "--config", str(cfg)).exit_code == 2
        cfg.write_text("{broken")
        assert invoke("pipeline", "--config", str(cfg)).exit_code == 2
