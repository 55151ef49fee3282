import json
import math
from dataclasses import replace

import pytest

from twinbeam_eom.config import (
    EomEntry,
    ScenarioConfig,
    config_hash,
    config_to_dict,
    derive_seed,
    load_config,
    parse_config,
)
from twinbeam_eom.errors import ConfigurationError, FileProcessingError


def test_defaults_are_valid():
    config = ScenarioConfig()

    assert config.scenario == "validate_pipelines"
    assert config.source.G == pytest.approx(math.sqrt(3.0))
    assert config.trace.delay_compensation == config.trace.delay_samples
    assert config.analysis_plan.drive_locked
    assert config.grid.guard_bins == 12


def test_round_trip_through_plain_data():
    config = parse_config(
        {
            "scenario": "fig4_covariance",
            "seed": 5,
            "eoms": [{"beam": "conjugate", "m": 0.2, "phi_deg": 90, "placement": "local_oscillator"}],
            "sweep": {"block_phases_deg": [0, 90]},
        }
    )

    again = parse_config(json.loads(json.dumps(config_to_dict(config))))
    assert again == config
    assert config_hash(again) == config_hash(config)


def test_partial_sections_keep_their_defaults():
    config = parse_config({"trace": {"n_samples": 200_000}, "grid": {"n_bins": 10}})

    assert config.trace.n_samples == 200_000
    assert config.trace.sample_rate == 1e8
    assert config.grid.n_bins == 10
    assert config.grid.guard_bins == 12


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigurationError, match="unknown key"):
        parse_config({"seeed": 1})
    with pytest.raises(ConfigurationError, match=r"trace: unknown key\(s\) \['samples'\]"):
        parse_config({"trace": {"samples": 5}})


def test_wrong_types_are_rejected():
    with pytest.raises(ConfigurationError, match="seed: expected a number"):
        parse_config({"seed": True})
    with pytest.raises(ConfigurationError, match="trace.n_samples: expected an integer"):
        parse_config({"trace": {"n_samples": 1.5}})
    with pytest.raises(ConfigurationError, match="sweep.phases_deg: expected a list"):
        parse_config({"sweep": {"phases_deg": 90}})
    with pytest.raises(ConfigurationError, match="eoms.*enabled: expected true or false"):
        parse_config({"eoms": [{"enabled": "yes"}]})


def test_domain_errors_surface_as_configuration_errors():
    with pytest.raises(ConfigurationError, match="source.G"):
        parse_config({"source": {"G": 0.5}})


def test_unknown_scenario_is_rejected():
    with pytest.raises(ConfigurationError, match="scenario"):
        parse_config({"scenario": "fig5"})


def test_duplicate_modulators_are_rejected():
    with pytest.raises(ConfigurationError, match="more than one modulator"):
        parse_config({"eoms": [{"beam": "probe"}, {"beam": "probe", "m": 0.2}]})


def test_guard_band_must_hold_the_largest_modulation():
    with pytest.raises(ConfigurationError, match="grid.guard_bins"):
        parse_config({"grid": {"guard_bins": 2}})


def test_bins_must_sit_on_the_analysis_resolution():
    with pytest.raises(ConfigurationError, match="grid.start_freq"):
        parse_config({"grid": {"start_freq": 3e5, "bin_spacing": 1e5, "guard_bins": 12}})


def test_record_must_hold_two_segments():
    with pytest.raises(ConfigurationError, match="trace.n_samples"):
        parse_config({"trace": {"n_samples": 600}})


def test_analysis_plan_must_be_drive_locked():
    with pytest.raises(ConfigurationError, match="plan"):
        parse_config({"plan": {"drive_locked": False}})


def test_modulator_phase_is_relative_to_reference():
    config = ScenarioConfig()
    spec = config.eom_spec(EomEntry(beam="conjugate", phi_deg=90.0))

    assert spec.phi == pytest.approx(0.0)
    assert spec.f_drive == config.f_drive
    assert config.eom_spec(EomEntry()).phi == pytest.approx(-0.5 * math.pi)


def test_trace_config_takes_seed_and_source():
    config = ScenarioConfig()
    cfg = config.trace_config(42)

    assert cfg.seed == 42
    assert cfg.src == config.source
    assert cfg.n_samples == config.trace.n_samples


def test_load_json_and_yaml(tmp_path):
    json_path = tmp_path / "scenario.json"
    json_path.write_text(json.dumps({"seed": 7, "trace": {"n_samples": 200000}}), encoding="utf-8")
    yaml_path = tmp_path / "scenario.yaml"
    yaml_path.write_text("seed: 7\ntrace:\n  n_samples: 2e5\n", encoding="utf-8")

    assert load_config(json_path) == load_config(yaml_path)
    assert load_config(yaml_path).trace.n_samples == 200_000


def test_load_rejects_missing_and_malformed_files(tmp_path):
    with pytest.raises(FileProcessingError, match="Cannot read config"):
        load_config(tmp_path / "missing.json")

    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="Invalid JSON"):
        load_config(broken)

    other = tmp_path / "scenario.toml"
    other.write_text("seed = 1", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="Unsupported config format"):
        load_config(other)


def test_empty_yaml_gives_defaults(tmp_path):
    path = tmp_path / "empty.yml"
    path.write_text("", encoding="utf-8")

    assert load_config(path) == ScenarioConfig()


def test_hash_ignores_output_directory_only():
    config = ScenarioConfig()

    assert config_hash(replace(config, output_dir="elsewhere")) == config_hash(config)
    assert config_hash(replace(config, seed=1)) != config_hash(config)
    assert len(config_hash(config)) == 64


def test_derived_seeds_are_stable_and_distinct():
    assert derive_seed(20230, 0, 1) == derive_seed(20230, 0, 1)
    assert len({derive_seed(20230, 0, i) for i in range(100)}) == 100
    assert derive_seed(20230, 1) != derive_seed(20231, 1)
