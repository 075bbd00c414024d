import filecmp
import json

import pytest

from phlab.cli import main, run_task
from phlab.config import ExperimentConfig, build_system
from phlab.errors import ConfigError

DEFORMED = {
    "seed": 11,
    "system": {"kind": "deformed", "auto_params": True},
    "task": {},
}


def small(task_overrides=None, **kw):
    cfg = json.loads(json.dumps(DEFORMED))
    cfg["task"] = task_overrides or {}
    cfg.update(kw)
    return ExperimentConfig.from_dict(cfg)


def test_verify_construction_small(tmp_path):
    cfg = small({"bump_samples": 200, "grid_points": 7, "random_chart_points": 2000,
                 "roundtrip_points": 1000, "roundtrip_chart_points": 200,
                 "fd_points": 200})
    report = run_task("verify-construction", cfg, str(tmp_path))
    assert report.all_passed
    assert (tmp_path / "report.txt").exists()
    assert (tmp_path / "report.csv").exists()


def test_verify_cones_small(tmp_path):
    cfg = small({"n_points": 200, "n_vectors": 4})
    report = run_task("verify-cones", cfg, str(tmp_path))
    assert report.all_passed
    assert (tmp_path / "cones.csv").exists()


def test_lyapunov_small(tmp_path):
    cfg = small({"n_orbits": 5, "orbit_length": 3000, "transient": 100,
                 "min_good_orbits": 5})
    report = run_task("lyapunov", cfg, str(tmp_path))
    assert report.all_passed
    assert (tmp_path / "bundle_exponents.csv").exists()
    assert (tmp_path / "lyapunov_history.gp").exists()


def test_gibbs_small(tmp_path):
    cfg = small({"plaque_samples": 2000, "cesaro_steps": 400, "integral_orbit": 5000})
    report = run_task("gibbs", cfg, str(tmp_path))
    assert report.all_passed
    assert (tmp_path / "cesaro_measure.csv").exists()


def test_skeleton_small(tmp_path):
    cfg = small({"census_max_period": 4, "arc_length": 2.0, "arc_resolution": 0.002,
                 "tol": 0.002})
    report = run_task("skeleton", cfg, str(tmp_path))
    assert report.all_passed


def test_product_checks_small(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "seed": 11,
        "system": {"kind": "product", "base_matrix": [[13, 8], [8, 5]],
                   "fiber_matrix": [[2, 1], [1, 1]]},
        "task": {"diagram_points": 500, "plaque_samples": 1500, "cesaro_steps": 200,
                 "identity_orbit": 2000, "grid_side": 8},
    })
    report = run_task("product-checks", cfg, str(tmp_path))
    assert report.all_passed


def test_tilde_system_config(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "seed": 3,
        "system": {"kind": "tilde", "auto_params": True, "eps_tilde": 0.05},
        "task": {"census_max_period": 2, "arc_length": 1.5, "arc_resolution": 0.003,
                 "tol": 0.003},
    })
    report = run_task("skeleton", cfg, str(tmp_path))
    assert report.all_passed


def test_determinism_byte_identical(tmp_path):
    """Same config and seed: every CSV artifact byte-identical across runs."""
    cfg = small({"n_points": 150, "n_vectors": 4})
    run_task("verify-cones", cfg, str(tmp_path / "a"))
    run_task("verify-cones", cfg, str(tmp_path / "b"))
    for name in ("report.csv", "cones.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)


def test_malformed_matrix_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({
            "seed": 1,
            "system": {"kind": "linear", "matrix": [[2, 1], [1]]},
        })
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({
            "seed": 1,
            "system": {"kind": "linear", "matrix": [[2.5, 1], [1, 1]]},
        })


def test_bad_kind_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": 1, "system": {"kind": "magic"}})


def test_missing_params_when_manual():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({
            "seed": 1,
            "system": {"kind": "deformed", "auto_params": False, "n": 3},
        })


def test_main_usage_error_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1, "system": {"kind": "linear", "matrix": [[2,1],[1]]}}')
    assert main(["verify-cones", str(bad)]) == 2
    missing = tmp_path / "does-not-exist.json"
    assert main(["verify-cones", str(missing)]) == 2


def test_main_pass_exit_0(tmp_path):
    cfg = {"seed": 5, "output_dir": str(tmp_path / "out"),
           "system": {"kind": "product", "base_matrix": [[13, 8], [8, 5]],
                      "fiber_matrix": [[2, 1], [1, 1]]},
           "task": {"diagram_points": 200, "plaque_samples": 800, "cesaro_steps": 100,
                    "identity_orbit": 1000, "grid_side": 6}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["product-checks", str(path)]) == 0


def test_wrong_system_for_task(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "seed": 1,
        "system": {"kind": "linear", "matrix": [[2, 1], [1, 1]]},
    })
    with pytest.raises(ConfigError):
        run_task("verify-cones", cfg, str(tmp_path))


def test_build_system_linear():
    cfg = ExperimentConfig.from_dict({
        "seed": 1, "system": {"kind": "linear", "matrix": [[2, 1], [1, 1]]},
    })
    system, resolved = build_system(cfg)
    assert system.dim == 2
    assert resolved["kind"] == "linear"


def test_product_base_by_id():
    cfg = ExperimentConfig.from_dict({
        "seed": 1,
        "system": {"kind": "product", "base_id": "cat^3",
                   "fiber_matrix": [[2, 1], [1, 1]]},
    })
    system, resolved = build_system(cfg)
    assert resolved["base_matrix"] == [[13, 8], [8, 5]]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({
            "seed": 1,
            "system": {"kind": "product", "base_id": "dog^3",
                       "fiber_matrix": [[2, 1], [1, 1]]},
        })
