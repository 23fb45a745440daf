#!/usr/bin/env python3
# End-to-end checks of the mediation executable: exit codes, fixture values,
# cross-command consistency, byte determinism and output schemas.
# usage: test_cli.py <mediation binary> <source dir>
import json
import subprocess
import sys
import tempfile
import time
import unittest
from pathlib import Path

import jsonschema

BIN = None
SRC = None


def run(*args, check=True):
    p = subprocess.run([BIN, *map(str, args)], capture_output=True, text=True)
    if check and p.returncode != 0:
        raise AssertionError(f"{args} exited {p.returncode}\n{p.stdout}\n{p.stderr}")
    return p


def data(name):
    return SRC / "tests" / "data" / name


def load(path):
    with open(path) as f:
        return json.load(f)


def schema(name):
    return load(SRC / "schemas" / f"{name}.schema.json")


def estimate(summary, model, quantity):
    for e in summary["estimates"]:
        if e["model"] == model and e["quantity"] == quantity:
            return e
    raise KeyError((model, quantity))


class Cli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def prefix(self, name):
        return self.dir / name

    # exit codes

    def test_missing_required_option_is_usage_error(self):
        p = run("mediate", "--input", data("noiseless.csv"), "--treatment", "T", "--outcome", "Y", check=False)
        self.assertEqual(p.returncode, 2)

    def test_unknown_column_is_input_error(self):
        p = run("mediate", "--input", data("noiseless.csv"), "--treatment", "T", "--mediator", "Z",
                "--outcome", "Y", check=False)
        self.assertEqual(p.returncode, 2)
        self.assertIn("Z", p.stderr)

    def test_bounds_on_continuous_mediator_needs_flag(self):
        p = run("bounds", "--input", data("survey.csv"), "--treatment", "treat", "--mediator", "attitude",
                "--outcome", "support", check=False)
        self.assertEqual(p.returncode, 2)
        self.assertIn("--dichotomize-mediator", p.stderr)

    def test_sensitivity_rejects_interaction(self):
        p = run("sensitivity", "--rho", "--interaction", "--input", data("noiseless.csv"), "--treatment", "T",
                "--mediator", "M", "--outcome", "Y", check=False)
        self.assertEqual(p.returncode, 2)

    def test_collinear_design_is_estimation_error(self):
        bad = self.dir / "collinear.csv"
        bad.write_text("T,M,Y\n" + "".join(f"{t},{1 + 2 * t},{i}\n" for i, t in enumerate([0, 1] * 5)))
        p = run("mediate", "--input", bad, "--treatment", "T", "--mediator", "M", "--outcome", "Y", check=False)
        self.assertEqual(p.returncode, 3)

    # fixture values

    def test_noiseless_lsem(self):
        out = self.prefix("nl")
        run("mediate", "--input", data("noiseless.csv"), "--treatment", "T", "--mediator", "M", "--outcome", "Y",
            "--out-prefix", out)
        s = load(f"{out}_mediate.json")
        self.assertEqual(s["n"], 8)
        for q in ("acme_t0", "acme_t1"):
            self.assertAlmostEqual(estimate(s, "no_interaction", q)["point"], 6.0, places=9)
        self.assertAlmostEqual(estimate(s, "no_interaction", "total")["point"], 7.0, places=9)

    def doubled_six(self):
        # every record twice: same cell frequencies, but each cell has a variance
        lines = data("six_records.csv").read_text().splitlines()
        path = self.dir / "six2.csv"
        path.write_text("\n".join(lines + lines[1:]) + "\n")
        return path

    def test_six_records_single_observation_cells_fail(self):
        p = run("mediate", "--nonparametric", "--input", data("six_records.csv"), "--treatment", "T",
                "--mediator", "M", "--outcome", "Y", check=False)
        self.assertEqual(p.returncode, 3)
        self.assertIn("single observation", p.stderr)

    def test_six_record_plugin(self):
        out = self.prefix("six")
        run("mediate", "--nonparametric", "--input", self.doubled_six(), "--treatment", "T", "--mediator", "M",
            "--outcome", "Y", "--out-prefix", out)
        s = load(f"{out}_mediate.json")
        self.assertAlmostEqual(estimate(s, "nonparametric", "acme_t0")["point"], 0.5, places=12)
        self.assertAlmostEqual(estimate(s, "nonparametric", "acme_t1")["point"], 0.5, places=12)

    def test_uniform_bounds_reach_sjolander(self):
        out = self.prefix("u8")
        run("bounds", "--input", data("uniform8.csv"), "--treatment", "T", "--mediator", "M", "--outcome", "Y",
            "--upsilon-grid", "0:1:11", "--out-prefix", out)
        s = load(f"{out}_bounds.json")
        for arm in s["arms"]:
            self.assertEqual(arm["sjolander"], [-0.5, 0.5])
            rows = (self.dir / f"u8_bounds_t{arm['t']}.csv").read_text().splitlines()
            self.assertEqual(rows[0], "upsilon,lower,upper,status")
            last = rows[-1].split(",")
            self.assertAlmostEqual(float(last[0]), 1.0)
            self.assertAlmostEqual(float(last[1]), -0.5, places=9)
            self.assertAlmostEqual(float(last[2]), 0.5, places=9)

    def test_bounds_collapse_matches_plugin(self):
        common = ["--input", data("survey.csv"), "--treatment", "treat", "--mediator", "attitude",
                  "--outcome", "support"]
        out = self.prefix("b0")
        run("bounds", *common, "--dichotomize-mediator", "--dichotomize-outcome", "--upsilon-grid", "0",
            "--out-prefix", out)
        b = load(f"{out}_bounds.json")
        # rebuild the dichotomized data by hand and run the plug-in on it
        lines = data("survey.csv").read_text().splitlines()
        head = lines[0].split(",")
        rows = [dict(zip(head, l.split(","))) for l in lines[1:]]
        cm, cy = b["cutpoints"]["mediator"], b["cutpoints"]["outcome"]
        binary = self.dir / "binary.csv"
        binary.write_text("T,M,Y\n" + "".join(
            f"{r['treat']},{int(float(r['attitude']) > cm)},{int(float(r['support']) > cy)}\n" for r in rows))
        out2 = self.prefix("np")
        run("mediate", "--nonparametric", "--input", binary, "--treatment", "T", "--mediator", "M", "--outcome", "Y",
            "--out-prefix", out2)
        m = load(f"{out2}_mediate.json")
        for arm in b["arms"]:
            t = arm["t"]
            point = estimate(m, "nonparametric", f"acme_t{t}")["point"]
            self.assertAlmostEqual(arm["plugin"], point, places=9)
            lo, hi = (self.dir / f"b0_bounds_t{t}.csv").read_text().splitlines()[1].split(",")[1:3]
            self.assertAlmostEqual(float(lo), point, places=6)
            self.assertAlmostEqual(float(hi), point, places=6)

    # consistency between commands

    def test_sensitivity_at_zero_matches_mediate(self):
        common = ["--input", data("survey.csv"), "--treatment", "treat", "--mediator", "attitude",
                  "--outcome", "support", "--covariates", "age,educ"]
        run("mediate", *common, "--out-prefix", self.prefix("m"))
        run("sensitivity", "--rho", *common, "--out-prefix", self.prefix("s"))
        m = load(f"{self.prefix('m')}_mediate.json")
        s = load(f"{self.prefix('s')}_sensitivity.json")
        acme = estimate(m, "no_interaction", "acme_t0")["point"]
        self.assertAlmostEqual(s["acme_at_rho0"], acme, places=6)
        self.assertEqual(s["zero_crossing_rho"], s["rho_tilde"])
        rows = (self.dir / "s_rho.csv").read_text().splitlines()
        self.assertEqual(rows[0], "rho,acme,se,ci_low,ci_high,converged")
        at_zero = [r.split(",") for r in rows[1:] if abs(float(r.split(",")[0])) < 1e-12]
        self.assertEqual(len(at_zero), 1)
        self.assertAlmostEqual(float(at_zero[0][1]), acme, places=6)

    # determinism

    def outputs(self, name):
        return {p.name[len(name):]: p.read_bytes() for p in sorted(self.dir.glob(f"{name}_*"))
                if not p.name.endswith("_manifest.json")}

    def test_byte_determinism(self):
        cases = {
            "mediate": ["mediate", "--nonparametric", "--bootstrap", "200", "--input", data("survey.csv"),
                        "--treatment", "treat", "--mediator", "educ", "--outcome", "support"],
            "rho": ["sensitivity", "--rho", "--input", data("survey.csv"), "--treatment", "treat",
                    "--mediator", "attitude", "--outcome", "support"],
            "r2": ["sensitivity", "--r2", "--resolution", "20", "--input", data("survey.csv"), "--treatment", "treat",
                   "--mediator", "attitude", "--outcome", "support"],
            "bounds": ["bounds", "--dichotomize-mediator", "--dichotomize-outcome", "--input", data("survey.csv"),
                       "--treatment", "treat", "--mediator", "attitude", "--outcome", "support"],
            "simulate": ["simulate", "--replicates", "100", "--n-list", "50,200"],
        }
        for label, args in cases.items():
            with self.subTest(label):
                seen = []
                for i, threads in enumerate((1, 1, 4)):
                    name = f"{label}{i}"
                    run(*args, "--seed", 11, "--threads", threads, "--out-prefix", self.prefix(name))
                    seen.append(self.outputs(name))
                self.assertTrue(seen[0])
                self.assertEqual(seen[0], seen[1])
                self.assertEqual(seen[0], seen[2])

    # schemas

    def test_outputs_match_schemas(self):
        common = ["--input", data("survey.csv"), "--treatment", "treat", "--mediator", "attitude",
                  "--outcome", "support"]
        run("mediate", *common, "--interaction", "--out-prefix", self.prefix("a"))
        run("mediate", "--nonparametric", "--input", data("survey.csv"), "--treatment", "treat", "--mediator", "educ",
            "--outcome", "support", "--bootstrap", "100", "--out-prefix", self.prefix("b"))
        run("sensitivity", "--rho", *common, "--out-prefix", self.prefix("c"))
        run("sensitivity", "--r2", "--kind", "original", "--resolution", "10", *common, "--out-prefix",
            self.prefix("d"))
        run("bounds", "--dichotomize-mediator", "--dichotomize-outcome", *common, "--out-prefix", self.prefix("e"))
        run("simulate", "--replicates", "100", "--n-list", "50", "--out-prefix", self.prefix("f"))
        checked = 0
        for path in sorted(self.dir.glob("*.json")):
            doc = load(path)
            kind = "manifest" if path.name.endswith("_manifest.json") else doc["command"]
            jsonschema.validate(doc, schema(kind))
            checked += 1
        self.assertEqual(checked, 12)

    def test_manifest_lists_outputs(self):
        run("mediate", "--input", data("noiseless.csv"), "--treatment", "T", "--mediator", "M", "--outcome", "Y",
            "--seed", 5, "--out-prefix", self.prefix("m"))
        man = load(f"{self.prefix('m')}_manifest.json")
        self.assertEqual(man["seed"], 5)
        for o in man["outputs"]:
            self.assertTrue(Path(o).exists() or (self.dir / Path(o).name).exists(), o)

    # simulate

    def test_simulate_header_and_speed(self):
        start = time.monotonic()
        p = run("simulate", "--replicates", "100", "--n-list", "50")
        self.assertLess(time.monotonic() - start, 10.0)
        self.assertIn("delta(0) = 0.675", p.stdout)
        self.assertIn("delta(1) = 4.03", p.stdout)


if __name__ == "__main__":
    BIN = sys.argv[1]
    SRC = Path(sys.argv[2])
    unittest.main(argv=sys.argv[:1], verbosity=2)
