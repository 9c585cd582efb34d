import json

import pytest
import yaml

from corpusprep import langid
from corpusprep.cli import main
from corpusprep.synth import DEMO_BLOCKLIST, build_mixed_corpus, labeled_corpus
from corpusprep.wet import write_wet_file


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    corpus = build_mixed_corpus(n_docs=60, n_shards=2, seed=21)
    (tmp / "wet").mkdir()
    for i, shard in enumerate(corpus.shards):
        write_wet_file(tmp / "wet" / f"crawl-{i}.wet.gz", shard)
    model = langid.train(labeled_corpus(200, seed=7), seed=3)
    langid.save_model(model, tmp / "model.npz")
    (tmp / "blocklist.txt").write_text(DEMO_BLOCKLIST, encoding="utf-8")
    config = {
        "wet_paths": ["wet/*.wet.gz"],
        "snapshot": "2024-05",
        "output_dir": "out",
        "workers": 1,
        "langid": {"model_path": "model.npz"},
        "content_filter": {"blocklist_path": "blocklist.txt"},
    }
    (tmp / "config.yaml").write_text(yaml.safe_dump(config), encoding="utf-8")
    return tmp


def test_validate_config_ok(cli_env, capsys):
    assert main(["validate-config", "-c", str(cli_env / "config.yaml")]) == 0
    assert "config ok" in capsys.readouterr().out


def test_validate_config_bad_override(cli_env, capsys):
    code = main(["run", "-c", str(cli_env / "config.yaml"), "--set", "langid.threshold=2"])
    assert code == 2
    assert "threshold" in capsys.readouterr().err


def test_run_then_resume_and_stats(cli_env, capsys):
    assert main(["run", "-c", str(cli_env / "config.yaml")]) == 0
    out = capsys.readouterr().out
    assert "accounting identity holds: True" in out

    assert main(["resume", "-c", str(cli_env / "config.yaml")]) == 0
    capsys.readouterr()

    assert main(["stats", "-c", str(cli_env / "config.yaml"), "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["totals"]["ingested_docs"] == 60
    assert report["accounting_identity_holds"]


def test_resume_without_manifests(cli_env, capsys):
    code = main(
        ["resume", "-c", str(cli_env / "config.yaml"), "--output-dir", str(cli_env / "fresh")]
    )
    assert code == 2
    assert "manifest" in capsys.readouterr().err


def test_invalid_stop_after(cli_env, capsys):
    code = main(["run", "-c", str(cli_env / "config.yaml"), "--stop-after", "nope"])
    assert code == 2
    assert "stop_after" in capsys.readouterr().err


def test_stop_after_partial_then_stats(cli_env, capsys):
    out_dir = str(cli_env / "partial")
    assert main(["run", "-c", str(cli_env / "config.yaml"),
                 "--output-dir", out_dir, "--stop-after", "langid"]) == 0
    capsys.readouterr()
    assert main(["stats", "-c", str(cli_env / "config.yaml"),
                 "--output-dir", out_dir, "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    langid_row = next(r for r in report["stages"] if r["stage"] == "langid")
    assert langid_row["input_docs"] == 60
    quality_row = next(r for r in report["stages"] if r["stage"] == "quality")
    assert quality_row["shards_done"] == 0
