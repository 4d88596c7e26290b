import pytest

from hyrel import Hkg, HyperFact, write_kg
from hyrel.cli import dispatch, _parse_query
from hyrel.errors import DataError
from hyrel.io import format_fact_line
from hyrel.model import HEAD, value_role


def make_raw_kg(path, units=5):
    facts = []
    for prefix in ("x", "y"):
        ents = [f"{prefix}{i}" for i in range(6)]
        for i in range(6):
            for j in range(i + 1, 6):
                quals = ((f"{prefix}k", ents[(i + j) % 6]),) if (i + j) % 2 else ()
                facts.append(HyperFact(ents[i], f"{prefix}r", ents[j], quals))
    write_kg(Hkg(facts), path)


def test_unknown_flag_is_usage_error(capsys):
    assert dispatch(["train", "--bogus"]) == 1


def test_unknown_subcommand_is_usage_error():
    assert dispatch(["frobnicate"]) == 1


def test_help_exits_zero():
    assert dispatch(["--help"]) == 0


def test_graph_stats_happy_path(tmp_path, capsys):
    kg_path = tmp_path / "kg.txt"
    make_raw_kg(kg_path)
    assert dispatch(["graph-stats", "--kg", str(kg_path), "--side", "entity",
                     "--dump", str(tmp_path / "edges.tsv")]) == 0
    out = capsys.readouterr().out
    assert "# hyrel" in out.splitlines()[0]
    assert "h2t_e" in out
    dump = (tmp_path / "edges.tsv").read_text(encoding="utf-8")
    assert "\th2t_e\t" in dump


def test_graph_stats_missing_file_is_data_error(tmp_path, capsys):
    assert dispatch(["graph-stats", "--kg", str(tmp_path / "absent.txt")]) == 2


def test_graph_stats_bad_preset_is_usage_error(tmp_path):
    kg_path = tmp_path / "kg.txt"
    make_raw_kg(kg_path)
    assert dispatch(["graph-stats", "--kg", str(kg_path), "--preset", "bogus"]) == 1


def test_split_train_eval_predict_pipeline(tmp_path, capsys):
    kg_path = tmp_path / "raw.txt"
    make_raw_kg(kg_path)
    bundle_dir = tmp_path / "bundle"
    assert dispatch(["split", "--input", str(kg_path), "--out", str(bundle_dir),
                     "--method", "louvain", "--ratios", "0.7,0.15,0.15",
                     "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "entity vocabularies disjoint: True" in out

    run_dir = tmp_path / "run"
    assert dispatch(["train", "--bundle", str(bundle_dir), "--out", str(run_dir),
                     "--epochs", "2", "--width", "8", "--encoder-depth", "1",
                     "--head-count", "1", "--decoder-depth", "1",
                     "--batch-size", "16"]) == 0
    out = capsys.readouterr().out
    assert "# seed = 0" in out
    assert (run_dir / "ckpt_best.bin").exists()

    assert dispatch(["eval", "--bundle", str(bundle_dir),
                     "--checkpoint", str(run_dir / "ckpt_best.bin"),
                     "--split", "test", "--tsv"]) == 0
    out = capsys.readouterr().out
    assert "mrr" in out and "hits@10" in out
    assert any(line.startswith("mrr\tALL\t") for line in out.splitlines())

    # Ad-hoc prediction against the trained checkpoint.
    from hyrel.io import load_bundle
    inf = load_bundle(bundle_dir).inference
    fact = inf.facts[0]
    query_text = " ".join(["[MASK]" if i == 2 else t
                           for i, t in enumerate(format_fact_line(fact).split("\t"))])
    assert dispatch(["predict", "--checkpoint", str(run_dir / "ckpt_best.bin"),
                     "--bundle", str(bundle_dir), "--query", query_text,
                     "--topk", "3"]) == 0
    out = capsys.readouterr().out
    assert "rank\tentity\tprobability" in out


def test_config_file_roundtrip(tmp_path, capsys):
    kg_path = tmp_path / "raw.txt"
    make_raw_kg(kg_path)
    cfg_file = tmp_path / "split.cfg"
    cfg_file.write_text("method = louvain\nratios = 0.8,0.1,0.1\nseed = 5\n",
                        encoding="utf-8")
    bundle_dir = tmp_path / "bundle"
    assert dispatch(["split", "--config", str(cfg_file), "--input", str(kg_path),
                     "--out", str(bundle_dir), "--seed", "9"]) == 0
    out = capsys.readouterr().out
    assert "# seed = 9" in out  # flag overrides the file
    assert "# method = louvain" in out


def test_unknown_config_key_rejected(tmp_path):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("zzz = 1\n", encoding="utf-8")
    assert dispatch(["split", "--config", str(cfg_file), "--input", "x",
                     "--out", "y"]) == 1


def test_selfcheck_quick(capsys):
    assert dispatch(["selfcheck", "--quick"]) == 0
    out = capsys.readouterr().out
    assert "ok - foundation graphs vs brute-force rules" in out
    assert "ok - gradients vs finite differences" in out
    assert "ok - score equivariance under relabeling" in out


def test_ablation_flag_selects_preset(tmp_path, capsys):
    kg_path = tmp_path / "raw.txt"
    make_raw_kg(kg_path)
    bundle_dir = tmp_path / "bundle"
    dispatch(["split", "--input", str(kg_path), "--out", str(bundle_dir),
              "--method", "louvain", "--ratios", "0.8,0.1,0.1"])
    capsys.readouterr()
    run_dir = tmp_path / "run2"
    assert dispatch(["train", "--bundle", str(bundle_dir), "--out", str(run_dir),
                     "--epochs", "1", "--width", "8", "--encoder-depth", "1",
                     "--head-count", "1", "--decoder-depth", "1",
                     "--ablation", "noV"]) == 0
    out = capsys.readouterr().out
    assert "# ablation = noV" in out
    meta = (run_dir / "ckpt_best.bin.meta").read_text(encoding="utf-8")
    assert "interactions = noV" in meta


def test_train_is_reproducible_across_invocations(tmp_path, capsys):
    kg_path = tmp_path / "raw.txt"
    make_raw_kg(kg_path)
    bundle_dir = tmp_path / "bundle"
    dispatch(["split", "--input", str(kg_path), "--out", str(bundle_dir),
              "--method", "louvain", "--ratios", "0.7,0.15,0.15"])
    capsys.readouterr()
    args = ["--epochs", "2", "--width", "8", "--encoder-depth", "1",
            "--head-count", "1", "--decoder-depth", "1", "--seed", "4"]
    assert dispatch(["train", "--bundle", str(bundle_dir),
                     "--out", str(tmp_path / "a")] + args) == 0
    assert dispatch(["train", "--bundle", str(bundle_dir),
                     "--out", str(tmp_path / "b")] + args) == 0
    capsys.readouterr()
    assert (tmp_path / "a" / "ckpt_final.bin").read_bytes() == \
        (tmp_path / "b" / "ckpt_final.bin").read_bytes()

    assert dispatch(["eval", "--bundle", str(bundle_dir),
                     "--checkpoint", str(tmp_path / "a" / "ckpt_final.bin"),
                     "--tsv"]) == 0
    first = capsys.readouterr().out
    assert dispatch(["eval", "--bundle", str(bundle_dir),
                     "--checkpoint", str(tmp_path / "b" / "ckpt_final.bin"),
                     "--tsv"]) == 0
    second = capsys.readouterr().out
    assert first == second


def test_parse_query_variants():
    from hyrel import TAIL
    q = _parse_query("a r [MASK]")
    assert q.masked == TAIL
    q2 = _parse_query("[MASK] r b k v")
    assert q2.masked == HEAD
    q3 = _parse_query("a r b k [MASK]")
    assert q3.masked == value_role(0)
    with pytest.raises(DataError):
        _parse_query("a r")
    with pytest.raises(DataError):
        _parse_query("a [MASK] b")
    with pytest.raises(DataError):
        _parse_query("a r b [MASK] v")
    with pytest.raises(DataError):
        _parse_query("[MASK] r [MASK]")
