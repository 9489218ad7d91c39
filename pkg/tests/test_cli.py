import csv
import io
import json
import shutil
import subprocess

import pytest

from ifaq.cli import BENCH_COLUMNS, main

from .conftest import json_close


@pytest.fixture(scope="module")
def retail(tmp_path_factory):
    d = tmp_path_factory.mktemp("retail")
    assert main(["gen", "--out", str(d), "--seed", "3", "--sales", "60", "--items", "6",
                 "--stores", "4", "--cities", "3", "--program"]) == 0
    return d


def prog_args(d, program=None):
    return ["--program", str(program or d / "bgd.ifaq"), "--schema", str(d / "schema.json"), "--db", str(d)]


def read_json(path):
    return json.loads(path.read_text())


def test_gen_writes_relations_schema_and_program(retail):
    assert sorted(p.name for p in retail.iterdir()) == ["I.csv", "R.csv", "S.csv", "bgd.ifaq", "schema.json"]
    assert len((retail / "S.csv").read_text().splitlines()) == 61


def test_run_naive_and_optimized_agree(retail, tmp_path):
    for passes in ("none", "highlevel", "agg", "all"):
        assert main(["run", *prog_args(retail), "--passes", passes, "--max-iters", "10",
                     "--out", str(tmp_path / f"{passes}.json"), "--stats", str(tmp_path / f"{passes}.stats.json")]) == 0
    base = read_json(tmp_path / "none.json")
    assert set(base) == {"i", "s", "c", "p"}
    keys = set(read_json(tmp_path / "none.stats.json"))
    for passes in ("highlevel", "agg", "all"):
        assert json_close(base, read_json(tmp_path / f"{passes}.json"), 1e-9)
        assert set(read_json(tmp_path / f"{passes}.stats.json")) == keys


def test_highlevel_loop_counters_do_not_grow_with_data(tmp_path):
    per_iter = []
    for sales in (40, 80):
        d = tmp_path / str(sales)
        main(["gen", "--out", str(d), "--sales", str(sales), "--items", "6", "--stores", "4", "--program"])
        main(["run", *prog_args(d), "--passes", "highlevel", "--max-iters", "3",
              "--out", str(d / "r.json"), "--stats", str(d / "s.json")])
        per_iter.append(read_json(d / "s.json")["loop"])
    assert per_iter[0] == per_iter[1]


def test_layout_flags_do_not_change_results(retail, tmp_path):
    outs = []
    for flags in ([], ["--hash-tries"], ["--no-arrays"], ["--hash-views"],
                  ["--hash-tries", "--no-arrays", "--hash-views"]):
        out = tmp_path / f"{len(outs)}.json"
        assert main(["run", *prog_args(retail), "--max-iters", "5", "--out", str(out), *flags]) == 0
        outs.append(out.read_bytes())
    assert len(set(outs)) == 1


def test_compare(retail, capsys):
    assert main(["compare", *prog_args(retail), "--max-iters", "5"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["agree"] is True
    assert set(report["stats"]) == {"none", "all"}


def test_compare_reports_disagreement(retail, capsys, monkeypatch):
    import ifaq.cli as cli
    monkeypatch.setattr(cli, "json_close", lambda a, b, rel: False)
    assert main(["compare", *prog_args(retail), "--max-iters", "1"]) == 5


def test_missing_schema_exits_2(retail, tmp_path, capsys):
    code = main(["run", "--program", str(retail / "bgd.ifaq"), "--schema", str(tmp_path / "nope.json"),
                 "--db", str(retail)])
    assert code == 2
    assert "nope.json" in capsys.readouterr().err


@pytest.mark.parametrize("src,code", [
    ("1 +", 1),
    ("sum(x in dom(Zzz)) 1", 2),
    ("1 / 0", 4),
])
def test_error_exit_codes(retail, tmp_path, capsys, src, code):
    p = tmp_path / "p.ifaq"
    p.write_text(src + "\n")
    assert main(["run", *prog_args(retail, p)]) == code
    assert capsys.readouterr().err.startswith("ifaq run: error:")


def test_bad_csv_exits_2(retail, tmp_path):
    d = tmp_path / "db"
    shutil.copytree(retail, d)
    (d / "R.csv").write_text("s,city\n1,1\n")
    assert main(["run", *prog_args(d)]) == 2


def test_trace_and_stages(retail, tmp_path):
    assert main(["trace", "--program", str(retail / "bgd.ifaq"), "--schema", str(retail / "schema.json"),
                 "--out", str(tmp_path / "t.jsonl"), "--stages", str(tmp_path / "st")]) == 0
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    assert lines and all(set(json.loads(ln)) == {"pass", "rule", "path", "before", "after"} for ln in lines)
    names = sorted(p.name for p in (tmp_path / "st").iterdir())
    assert names[0] == "00_input.ifaq"
    assert {n.split("_", 1)[1] for n in names} >= {
        "input.ifaq", "normalize.ifaq", "schedule.ifaq", "factorize.ifaq", "memoize.ifaq", "licm.ifaq"}


def test_trace_of_trivial_program_is_empty(retail, tmp_path, capsys):
    p = tmp_path / "z.ifaq"
    p.write_text("0\n")
    assert main(["trace", "--program", str(p), "--schema", str(retail / "schema.json")]) == 0
    assert capsys.readouterr().out == ""


def test_explain(retail, capsys):
    assert main(["explain", *prog_args(retail)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("layouts:\n")
    assert "operators:" in out and "merge cursor on W_R" in out


def test_lr_program_matches_gen_output(retail, capsys):
    assert main(["lr-program", "--schema", str(retail / "schema.json")]) == 0
    assert capsys.readouterr().out == (retail / "bgd.ifaq").read_text()
    assert main(["lr-program", "--schema", str(retail / "schema.json"), "--features", "p,u"]) == 2


def test_cart_with_holdout(retail, tmp_path, capsys):
    held = tmp_path / "held"
    main(["gen", "--out", str(held), "--seed", "4", "--sales", "20", "--items", "6", "--stores", "4",
          "--cities", "3"])
    capsys.readouterr()
    assert main(["cart", "--schema", str(retail / "schema.json"), "--db", str(retail), "--max-depth", "2",
                 "--features", "s,c,p", "--out", str(tmp_path / "tree.json"), "--holdout", str(held)]) == 0
    tree = read_json(tmp_path / "tree.json")
    assert tree["count"] == 60 and {"left", "right"} <= set(tree)
    report = json.loads(capsys.readouterr().out)
    assert report["tuples"] == 20 and report["rmse"] >= 0


def test_bench_sweep_shape(capsys):
    assert main(["bench", "--sales", "20,40,80", "--iters", "1,2,3", "--items", "8", "--stores", "4",
                 "--no-time"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 27
    assert tuple(rows[0]) == BENCH_COLUMNS
    assert {r["seconds"] for r in rows} == {"-"}
    for sales in ("20", "40", "80"):
        opt = {r["tuplesScanned"] for r in rows if r["sales"] == sales and r["passes"] == "all"}
        assert opt == {str(int(sales) + 8 + 4)}


def test_bench_rejects_unknown_pass_set():
    assert main(["bench", "--sales", "5", "--iters", "1", "--passes", "fast"]) == 2


def test_console_script(retail, tmp_path):
    exe = shutil.which("ifaq")
    assert exe, "package not installed"
    r = subprocess.run([exe, "run", "--program", str(retail / "bgd.ifaq"), "--schema", str(tmp_path / "x.json"),
                        "--db", str(retail)], capture_output=True, text=True)
    assert r.returncode == 2 and "x.json" in r.stderr
