import copy
import csv
import json
import math
from pathlib import Path

import pytest

from cglm import cli
from cglm.config import DEFAULTS, ConfigError, load_config, parse_config
from cglm.experiment import (ROW_SCHEMA, build_truth, compute_aggregates, compute_verdicts,
                             resolve_threads, run_cell, run_experiment, validate_orders)
from cglm.expfam import FAMILIES
from cglm.report import REQUIRED_KEYS, ReportMismatch, emit_outputs, load_report, read_rows

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_CONFIG = ROOT / "configs" / "default.json"


def default_raw():
    return json.loads(DEFAULT_CONFIG.read_text())


def small_cfg(**over):
    raw = default_raw()
    raw.update({"replications": 1})
    raw.update(over)
    return parse_config(raw)


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("default")
    cfg = load_config(DEFAULT_CONFIG).with_overrides(output_dir=str(out))
    report = run_experiment(cfg)
    emit_outputs(report, out)
    return cfg, report, out


class TestConfig:
    def test_defaults_parse(self):
        cfg = parse_config({})
        assert cfg.member.kind == "bernoulli" and cfg.n_grid == (50,) and cfg.d_values == (100,)
        assert cfg.b_n_values == (cfg.s_star,)

    def test_shipped_configs_parse(self):
        for path in sorted((ROOT / "configs").glob("*.json")):
            load_config(path)

    @pytest.mark.parametrize("obj,match", [
        ({"nope": 1}, "unknown config key 'nope'"),
        ({"sampler": {"speed": 2}}, "sampler.speed"),
        ({"family": {"kind": "weibull"}}, "family.kind"),
        ({"family": {"kind": "poisson", "rate": 2}}, "family keys"),
        ({"family": {"kind": "negbinomial", "q": -1}}, "family"),
        ({"clip": {"kind": "default", "level": 3}}, "clip keys"),
        ({"family": {"kind": "poisson"}, "clip": {"kind": "pole"}}, "clip"),
        ({"design": {"kind": "sparse"}}, "design.kind"),
        ({"n_grid": []}, "n_grid"),
        ({"n_grid": [10, 0]}, "n_grid entry"),
        ({"n_grid": [10, 20], "d_rule": {"values": [30]}}, "d_rule.values"),
        ({"d_rule": {"factor": -1}}, "factor"),
        ({"d_rule": {}}, "d_rule"),
        ({"n_grid": [10, 20], "budget": {"b_n": [2]}}, "b_n list"),
        ({"beta_star": {"magnitude": [2.0, 1.0]}}, "magnitude"),
        ({"prior": {"a": "huge"}}, "prior.a"),
        ({"prior": {"a": -1.0}}, "prior.a"),
        ({"prior": {"lambda_rule": "median"}}, "lambda_rule"),
        ({"checks": ["T4"]}, "checks"),
        ({"checks": []}, "checks"),
        ({"sampler": {"moves": {"add": 1.0}}}, "move probabilities"),
        ({"sampler": {"moves": {"jump": 1.0}}}, "sampler.moves.jump"),
        ({"sampler": {"iters": 0}}, "iters"),
        ({"mc_draws": 500}, "mc_draws"),
        ({"ic": {"radius": 0.0}}, "ic.radius"),
        ({"ic": {"lemma3_grid": 1}}, "lemma3_grid"),
        ({"ic": {"tolerance": "tiny"}}, "ic.tolerance"),
        ({"master_seed": -1}, "master_seed"),
        ({"master_seed": 2 ** 64}, "master_seed"),
        ({"verdicts": {"prob_threshold": "low"}}, "prob_threshold"),
        ([], "JSON object"),
    ])
    def test_rejected(self, obj, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(obj)

    def test_small_mc_allowed_without_t1(self):
        assert parse_config({"mc_draws": 10, "checks": ["T2"]}).checks == ("T2",)

    def test_b_n_list_and_scalar(self):
        cfg = parse_config({"n_grid": [10, 20], "budget": {"b_n": [2, 3]}})
        assert cfg.b_n_values == (2, 3)
        assert parse_config({"n_grid": [10, 20], "budget": {"b_n": 4}}).b_n_values == (4, 4)

    def test_d_rule_factor_rounds_up(self):
        assert parse_config({"n_grid": [7], "d_rule": {"factor": 1.5}}).d_values == (11,)

    def test_with_overrides(self):
        cfg = parse_config({})
        new = cfg.with_overrides(seed=99, output_dir="elsewhere")
        assert (new.master_seed, new.output_dir) == (99, "elsewhere")
        assert cfg.master_seed == DEFAULTS["master_seed"]
        assert cfg.with_overrides().raw == cfg.raw

    def test_defaults_not_mutated(self):
        before = copy.deepcopy(DEFAULTS)
        parse_config({"sampler": {"moves": {"add": 0.3, "delete": 0.3, "swap": 0.1, "walk": 0.3}}})
        assert DEFAULTS == before

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(bad)


class TestThreads:
    def test_explicit(self, monkeypatch):
        monkeypatch.setenv("CGLM_THREADS", "3")
        assert resolve_threads(2) == 2

    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("CGLM_THREADS", "3")
        assert resolve_threads(None) == 3

    def test_default_one(self, monkeypatch):
        monkeypatch.delenv("CGLM_THREADS", raising=False)
        assert resolve_threads(None) == 1

    def test_rejects_zero(self):
        with pytest.raises(ConfigError):
            resolve_threads(0)


class TestExperiment:
    def test_order_violation_fails_fast(self):
        cfg = parse_config({"n_grid": [6], "d_rule": {"values": [5]}, "budget": {"b_n": 5},
                            "s_star": 6})
        with pytest.raises(ConfigError, match="n = 6"):
            validate_orders(cfg)
        with pytest.raises(ConfigError):
            run_experiment(cfg)

    def test_single_cell_row(self):
        cfg = small_cfg()
        report = run_experiment(cfg)
        assert len(report.rows) == 1
        row = report.rows[0]
        assert set(row) == {k for k, _ in ROW_SCHEMA}
        assert row["status"] == "ok" and row["seed"] == "7:0" and row["cell"] == 0
        assert 0.0 <= row["p_dim_exceeds"] <= 1.0 and math.isfinite(row["log_marginal"])
        assert len(report.timings) == 1 and report.timings[0][1] >= 0

    def test_truth_fixed_across_replications(self, default_run):
        _, report, _ = default_run
        a, b = report.rows
        assert a["beta_star_l1"] == b["beta_star_l1"] and a["phi1_star"] == b["phi1_star"]
        assert a["seed"] != b["seed"]

    def test_cell_reproducible(self):
        cfg = small_cfg()
        setup = build_truth(cfg, 0)
        r1, _ = run_cell(cfg, setup, 0, 5)
        r2, _ = run_cell(cfg, setup, 0, 5)
        assert r1 == r2

    def test_unidentifiable_truth_aborts_cells(self):
        cfg = small_cfg(ic={"restarts": 2, "tolerance": 1e9})
        report = run_experiment(cfg)
        assert not report.setups[0]["in_bn"]
        assert report.rows[0]["status"].startswith("aborted: truth outside the identifiable class")
        assert math.isnan(report.aggregates["60"]["freq_T1"])
        assert not report.passed

    def test_threads_give_identical_rows(self, tmp_path):
        cfg = small_cfg(replications=2)
        one = run_experiment(cfg, threads=1)
        two = run_experiment(cfg, threads=2)
        assert one.rows == two.rows and one.aggregates == two.aggregates

    def test_same_seed_same_files(self, default_run, tmp_path):
        cfg, _, out = default_run
        again = run_experiment(cfg.with_overrides(output_dir=str(tmp_path)))
        emit_outputs(again, tmp_path, figures=False)
        for name in ("rows.csv", "curve_l1_vs_n.csv", "curve_dim_vs_n.csv"):
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes()
        a, b = (json.loads((p / "report.json").read_text()) for p in (tmp_path, out))
        assert a["config"].pop("output_dir") != b["config"].pop("output_dir")
        assert a == b

    def test_different_seed_changes_rows(self, default_run):
        cfg, report, _ = default_run
        other = run_experiment(cfg.with_overrides(seed=8))
        assert other.rows[0]["log_marginal"] != report.rows[0]["log_marginal"]


class TestAggregatesAndVerdicts:
    @staticmethod
    def rows(n, dims, supers, outside, errs, t1=None):
        out = []
        for i, (p, q, r, e) in enumerate(zip(dims, supers, outside, errs)):
            row = dict.fromkeys(k for k, _ in ROW_SCHEMA)
            row.update({"cell": i, "n": n, "replication": i, "status": "ok", "d": 2 * n,
                        "s_star": 2, "p_dim_exceeds": p, "p_strict_superset": q,
                        "p_outside_radius": r, "posterior_mean_l1_error": e, "mean_size": 2.0,
                        "log_marginal": -1.0, "T1": None if t1 is None else t1[i]})
            out.append(row)
        return out

    def test_means_and_quartiles(self):
        agg = compute_aggregates(self.rows(50, [0.0, 0.2], [0.1, 0.3], [0, 0], [1.0, 3.0]), 0.1)["50"]
        assert agg["mean_p_dim_exceeds"] == pytest.approx(0.1)
        assert agg["mean_p_strict_superset"] == pytest.approx(0.2)
        assert agg["posterior_mean_l1_error_median"] == 2.0
        assert agg["posterior_mean_l1_error_q1"] == 1.5 and agg["posterior_mean_l1_error_q3"] == 2.5

    def test_t1_required_frequency(self):
        agg = compute_aggregates(self.rows(50, [0] * 4, [0] * 4, [0] * 4, [1] * 4, t1=[1, 1, 1, 0]),
                                 0.1)["50"]
        assert agg["freq_T1"] == 0.75
        assert agg["t1_required"] == pytest.approx(1 - 1 / (2 * math.log(100)) - 0.1)

    def verdicts(self, dims, errs, checks=("T2", "C1", "T3"), **vc):
        rows = []
        for k, (n, p) in enumerate(zip((50, 100), dims)):
            rows += self.rows(n, [p], [p], [p], [errs[k]])
        cfg = dict(DEFAULTS["verdicts"], **vc)
        return {v["check"]: v for v in compute_verdicts(compute_aggregates(rows, 0.1), checks, cfg)}

    def test_all_pass(self):
        v = self.verdicts([0.05, 0.01], [1.0, 0.5])
        assert all(x["passed"] for x in v.values())
        assert v["T3_trend"]["values"]["ratio"] == 0.5

    def test_level_failure(self):
        v = self.verdicts([0.2, 0.05], [1.0, 0.5])
        assert not v["T2_dimension"]["passed"] and not v["T3_radius"]["passed"]
        assert v["C1_superset"]["passed"]

    def test_increasing_dimension_fails_trend(self):
        assert not self.verdicts([0.01, 0.05], [1.0, 0.5])["T2_dimension"]["passed"]
        assert self.verdicts([0.01, 0.05], [1.0, 0.5], trend_tolerance=0.05)["T2_dimension"]["passed"]

    def test_contraction_ratio(self):
        assert not self.verdicts([0.0, 0.0], [1.0, 0.9])["T3_trend"]["passed"]
        assert self.verdicts([0.0, 0.0], [1.0, 0.85])["T3_trend"]["passed"]

    def test_single_n_trend_skipped(self):
        agg = compute_aggregates(self.rows(50, [0.0], [0.0], [0.0], [1.0]), 0.1)
        (trend,) = [v for v in compute_verdicts(agg, ("T3",), DEFAULTS["verdicts"])
                    if v["check"] == "T3_trend"]
        assert trend["passed"] is None

    def test_only_requested_checks(self):
        assert set(self.verdicts([0, 0], [1, 1], checks=("C1",))) == {"C1_superset"}


class TestReport:
    def test_files_written(self, default_run):
        _, _, out = default_run
        for name in ("rows.csv", "report.json", "curve_l1_vs_n.csv", "curve_dim_vs_n.csv",
                     "timings.csv", "curve_l1_vs_n.png", "curve_dim_vs_n.png",
                     "indicator_frequencies.png"):
            assert (out / name).stat().st_size > 0

    def test_required_keys(self, default_run):
        doc = json.loads((default_run[2] / "report.json").read_text())
        assert set(REQUIRED_KEYS) <= set(doc)
        assert doc["versions"]["numpy"] and doc["name"] == "desk-default"

    def test_round_trip(self, default_run):
        _, report, out = default_run
        rows, doc = load_report(out)
        assert len(rows) == len(report.rows)
        for a, b in zip(rows, report.rows):
            for k, v in a.items():
                if v is None or (isinstance(v, float) and math.isnan(v)):
                    assert b[k] in (None, "") or math.isnan(b[k])
                else:
                    assert v == b[k], k

    def test_tampered_rows_detected(self, default_run, tmp_path):
        _, _, out = default_run
        for name in ("rows.csv", "report.json"):
            (tmp_path / name).write_bytes((out / name).read_bytes())
        with open(tmp_path / "rows.csv", newline="") as fh:
            table = list(csv.reader(fh))
        col = table[0].index("p_dim_exceeds")
        table[1][col] = repr(float(table[1][col]) + 0.25)
        with open(tmp_path / "rows.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(table)
        with pytest.raises(ReportMismatch):
            load_report(tmp_path)

    def test_unexpected_columns(self, tmp_path):
        (tmp_path / "rows.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="unexpected columns"):
            read_rows(tmp_path / "rows.csv")

    def test_missing_keys(self, default_run, tmp_path):
        (tmp_path / "rows.csv").write_bytes((default_run[2] / "rows.csv").read_bytes())
        (tmp_path / "report.json").write_text("{}")
        with pytest.raises(ValueError, match="required keys"):
            load_report(tmp_path)

    def test_unwritable_output_cleans_up(self, default_run, tmp_path):
        _, report, _ = default_run
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            emit_outputs(report, blocker / "sub")

    def test_timings_separate_from_rows(self, default_run):
        out = default_run[2]
        assert "seconds" not in (out / "rows.csv").read_text().splitlines()[0]
        with open(out / "timings.csv", newline="") as fh:
            assert len(list(csv.DictReader(fh))) == 2


class TestCli:
    def run(self, capsys, *argv):
        code = cli.main(list(argv))
        return code, capsys.readouterr()

    @pytest.mark.parametrize("kind", FAMILIES)
    def test_validate_family(self, capsys, tmp_path, kind):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"family": {"kind": kind}}))
        code, io = self.run(capsys, "validate-family", "--config", str(path))
        assert code == 0 and "FAIL" not in io.out and "kl_equals_bregman" in io.out

    def test_check_clipping(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"family": {"kind": "poisson"},
                                    "clip": {"kind": "soft_clip_upper", "c0": 4}}))
        code, io = self.run(capsys, "check-clipping", "--config", str(path))
        doc = json.loads(io.out)
        assert code == 0 and doc["range_inside_sublevel_set"]
        assert doc["m0_squared"] == pytest.approx(2 * math.exp(4))

    def test_uncertifiable_clip_is_config_error(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"family": {"kind": "poisson"}, "clip": {"kind": "identity"}}))
        code, io = self.run(capsys, "check-clipping", "--config", str(path))
        assert code == 2 and "config error" in io.err

    def test_constants(self, capsys, tmp_path):
        code, io = self.run(capsys, "constants", "--config", str(DEFAULT_CONFIG),
                            "--out", str(tmp_path))
        (info,) = json.loads(io.out)
        c = info["constants"]
        assert code == 0 and c["lambda_lo"] <= info["lambda"] <= c["lambda_hi"]
        assert json.loads((tmp_path / "constants.json").read_text()) == [info]

    def test_simulate(self, capsys, tmp_path):
        code, io = self.run(capsys, "simulate", "--config", str(DEFAULT_CONFIG),
                            "--out", str(tmp_path))
        assert code == 0
        for name in ("design.csv", "dataset.csv", "chain.csv", "chain_trace.png", "summary.json"):
            assert (tmp_path / name).exists()
        summary = json.loads((tmp_path / "summary.json").read_text())["summary"]
        assert 0 <= summary["prob_dim_exceeds"] <= 1

    def test_contract_passes_on_default(self, capsys, tmp_path):
        code, io = self.run(capsys, "contract", "--config", str(DEFAULT_CONFIG),
                            "--out", str(tmp_path), "--seed", "7")
        assert code == 0 and "FAIL" not in io.out
        load_report(tmp_path)

    def test_contract_failure_exit_code(self, capsys, tmp_path):
        raw = default_raw()
        raw.update({"replications": 1, "verdicts": {"prob_threshold": -1.0}, "checks": ["T2"]})
        path = tmp_path / "c.json"
        path.write_text(json.dumps(raw))
        code, io = self.run(capsys, "contract", "--config", str(path), "--out", str(tmp_path / "o"))
        assert code == 3 and "FAIL  T2_dimension" in io.out
        assert (tmp_path / "o" / "report.json").exists()

    @pytest.mark.parametrize("argv", [
        ["frobnicate"],
        [],
        ["contract", "--bogus"],
        ["contract", "--seed", "-3"],
        ["contract", "--seed", str(2 ** 64)],
        ["contract", "--threads", "0"],
    ])
    def test_argument_errors(self, capsys, argv):
        assert self.run(capsys, *argv)[0] == 2

    def test_bad_config_file(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"replications": 0}))
        code, io = self.run(capsys, "contract", "--config", str(path))
        assert code == 2 and "replications" in io.err

    def test_order_violation_exit(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"n_grid": [6], "d_rule": {"values": [5]},
                                    "budget": {"b_n": 5}, "s_star": 6}))
        assert self.run(capsys, "constants", "--config", str(path))[0] == 2

    def test_internal_error_exit(self, capsys, monkeypatch):
        def boom(cfg, args):
            raise RuntimeError("kaput")
        monkeypatch.setitem(cli.COMMANDS, "constants", boom)
        code, io = self.run(capsys, "constants")
        assert code == 1 and "RuntimeError: kaput" in io.err
