import numpy as np
import pytest

pytest.importorskip("mcp")

from conftest import negative_covariance_model  # noqa: E402
from tools import contribution_tools, model_tools, prompts, simulation_tools  # noqa: E402
from utils.var_model import load_model, save_model  # noqa: E402


@pytest.fixture
def model_path(tmp_path, csv_file):
    path = tmp_path / "fitted.json"
    model_tools.fit_var_model(str(csv_file), order=2, model_path=str(path))
    return path


def test_fit_var_model_report(tmp_path, csv_file):
    path = tmp_path / "m.json"
    report = model_tools.fit_var_model(str(csv_file), max_order=4, model_path=str(path))
    assert "AIC by order" in report
    assert "x1+x2" in report
    assert load_model(path).order >= 2


def test_fit_var_model_default_path(csv_file):
    report = model_tools.fit_var_model(str(csv_file), order=1)
    assert csv_file.with_suffix(".model.json").exists()
    assert "VAR(1)" in report


def test_power_contribution_table(tmp_path):
    path = save_model(negative_covariance_model(), tmp_path / "neg.json")
    text = contribution_tools.power_contribution(str(path), "a", grid_points=3)
    assert "a+b" in text
    assert "Integrated over the grid" in text
    with pytest.raises(ValueError):
        contribution_tools.power_contribution(str(path), "zzz")


def test_spectrum_peaks_lists_each_channel(model_path):
    text = model_tools.spectrum_peaks(str(model_path), grid_points=101)
    assert "x1" in text and "x2" in text


def test_simulate_noise_scenarios(model_path):
    text = simulation_tools.simulate_noise_scenarios(str(model_path), replicates=4, length=50, seed=1)
    assert "(1+2)" in text and "pct_change" in text


def test_replay_noise_inputs(csv_file, model_path):
    text = simulation_tools.replay_noise_inputs(str(csv_file), str(model_path), 1)
    assert "full" in text and "share" in text


def test_guidance_prompt_mentions_pair_terms():
    text = prompts.power_contribution_guidance()
    assert "negative" in text and "a+b" in text
