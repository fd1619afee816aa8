from pathlib import Path

import pytest
import yaml

from ensemblelabel.config import ConfigError, load_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, overrides=None, drop=None):
    base = {
        "task": "ecg_af",
        "run_dir": "runs/t",
        "k_thresholds": [4, 0, 7],
        "simulation": {"n_cases": 20,
                       "mix": {"AF": 0.8, "Non-AF": 0.1, "Uncertain": 0.1},
                       "seed": 1},
        "agents": [
            {"agent_id": f"a{i}", "backend_kind": "simulated",
             "simulated": {"seed": i, "accuracy": 0.9}}
            for i in range(7)
        ],
    }
    base.update(overrides or {})
    for key in drop or ():
        base.pop(key, None)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(base), encoding="utf-8")
    return path


class TestShippedConfigs:
    def test_ecg_sim_loads_with_stable_hash(self):
        first = load_config(CONFIGS / "ecg_sim.yaml")
        second = load_config(CONFIGS / "ecg_sim.yaml")
        assert first.config_hash == second.config_hash
        assert first.n_agents == 7
        assert first.primary_k == 4
        assert first.task.task_id == "ecg_af"
        assert first.prompt_path.exists()

    def test_http_example_loads(self):
        config = load_config(CONFIGS / "ecg_http_example.yaml")
        kinds = {a.backend_kind for a in config.agents}
        assert kinds == {"chat_completion_http", "local_model_server"}

    def test_sdoh_example_loads(self):
        config = load_config(CONFIGS / "sdoh_employment_sim.yaml")
        assert config.task.valid_set == ("Adverse", "Non-adverse", "Uncertain")
        assert not config.prefilter_enabled
        assert config.task.category_key == "Status"


class TestValidation:
    def test_threshold_exceeding_committee_size(self, tmp_path):
        path = write_config(tmp_path, {"k_thresholds": [9]})
        with pytest.raises(ConfigError, match="exceeds committee size"):
            load_config(path)

    def test_duplicate_agent_id_named(self, tmp_path):
        path = write_config(tmp_path)
        data = yaml.safe_load(path.read_text())
        data["agents"][3]["agent_id"] = "a1"
        path.write_text(yaml.safe_dump(data))
        with pytest.raises(ConfigError, match="a1"):
            load_config(path)

    def test_unknown_top_level_key_rejected_with_path(self, tmp_path):
        path = write_config(tmp_path, {"agnets": []})
        with pytest.raises(ConfigError, match="agnets"):
            load_config(path)

    def test_unknown_agent_key_rejected_with_path(self, tmp_path):
        path = write_config(tmp_path)
        data = yaml.safe_load(path.read_text())
        data["agents"][2]["tempreature"] = 1
        path.write_text(yaml.safe_dump(data))
        with pytest.raises(ConfigError, match=r"agents\[2\].*tempreature"):
            load_config(path)

    def test_input_required_without_simulation(self, tmp_path):
        path = write_config(tmp_path, drop=["simulation"])
        with pytest.raises(ConfigError, match="input_path"):
            load_config(path)

    def test_missing_input_file(self, tmp_path):
        path = write_config(tmp_path, {"input_path": "nowhere.csv"}, drop=["simulation"])
        with pytest.raises(ConfigError, match="not found"):
            load_config(path)

    def test_simulated_agent_without_seed(self, tmp_path):
        path = write_config(tmp_path)
        data = yaml.safe_load(path.read_text())
        del data["agents"][0]["simulated"]["seed"]
        path.write_text(yaml.safe_dump(data))
        with pytest.raises(ConfigError, match="seed"):
            load_config(path)

    def test_bad_denominator(self, tmp_path):
        path = write_config(tmp_path, {"denominator": "whatever"})
        with pytest.raises(ConfigError, match="denominator"):
            load_config(path)

    def test_prompt_cross_check_catches_vocabulary_mismatch(self, tmp_path):
        inline_task = {
            "task_id": "odd",
            "raw_set": ["Zebra", "Not Zebra"],
            "valid_set": ["Zebra", "Not Zebra"],
            "raw_to_final": {"Zebra": "Zebra", "Not Zebra": "Not Zebra"},
            "default_label": "Not Zebra",
            "positive_class": "Zebra",
        }
        prompt = tmp_path / "p.yaml"
        prompt.write_text(yaml.safe_dump({
            "system_message": "s",
            "instruction": 'classify into "Yes" or "No" with "Diagnosis", "AF_pr", "Explanation"',
            "report_marker": ": ",
        }))
        path = write_config(tmp_path, {"task": inline_task, "prompt_path": "p.yaml"})
        with pytest.raises(ConfigError, match="Zebra"):
            load_config(path)

    def test_relative_paths_resolve_against_config_dir(self, tmp_path):
        (tmp_path / "data").mkdir()
        corpus = tmp_path / "data" / "c.csv"
        corpus.write_text("case_id,report_text\nx,Atrial fibrillation.\n")
        path = write_config(tmp_path, {"input_path": "data/c.csv"})
        config = load_config(path)
        assert config.input_path == corpus.resolve()
        assert config.run_dir == tmp_path / "runs/t"
