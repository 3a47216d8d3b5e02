"""Command-line interface.

Commands: transform, map, test, granger, simulate, benchmark.  Exit codes:
0 completed (a test's verdict is its p-value, not the exit status), 2 for
input errors, 3 for numerical failures.
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from .citest import TestConfig, ci_test, granger_test
from .dgp import DgpSpec, benchmark, generate
from .errors import InvalidInputError, LgpcError, NumericalError
from .loccor import estimate_field
from .locallik import plugin_bandwidth
from .partialcorr import estimate_partial
from .transform import to_pseudo_normal, x_to_z_point

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _read_delimited(path):
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            if not header:
                raise InvalidInputError(f"{path}: empty file")
            names = [c.strip() for c in header.split(",")]
            rows = []
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != len(names):
                    raise InvalidInputError(
                        f"{path}:{lineno}: expected {len(names)} fields, got {len(parts)}"
                    )
                try:
                    rows.append([float(v) for v in parts])
                except ValueError as exc:
                    raise InvalidInputError(f"{path}:{lineno}: {exc}")
    except OSError as exc:
        raise InvalidInputError(str(exc))
    if len(rows) < 2:
        raise InvalidInputError(f"{path}: need at least 2 data rows")
    return names, np.array(rows)


def _write(path, text):
    if path is None:
        click.echo(text, nl=False)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _parse_cond(cond, names):
    out = {}
    if not cond:
        return out
    for item in cond.split(","):
        if "=" not in item:
            raise InvalidInputError(f"--cond entry '{item}' is not NAME=VALUE")
        name, value = item.split("=", 1)
        name = name.strip()
        if name not in names:
            raise InvalidInputError(f"unknown column '{name}'")
        try:
            out[name] = float(value)
        except ValueError:
            raise InvalidInputError(f"--cond value for '{name}' is not numeric")
    return out


def _parse_region(region):
    if region is None:
        return None
    try:
        lo, hi = (float(v) for v in region.split(","))
    except ValueError:
        raise InvalidInputError("--region must be LO,HI")
    return (lo, hi)


def _parse_dgp(spec_text):
    """Parse '5', '5p'/'5prime', '5pp' into (id, family)."""
    s = spec_text.strip().lower().replace("'", "p")
    fam = "base"
    if s.endswith("pp"):
        fam, s = "double_primed", s[:-2]
    elif s.endswith("prime"):
        fam, s = "primed", s[:-5]
    elif s.endswith("p"):
        fam, s = "primed", s[:-1]
    try:
        dgp_id = int(s)
    except ValueError:
        raise InvalidInputError(f"cannot parse process spec '{spec_text}'")
    return dgp_id, fam


def _run(fn):
    try:
        fn()
    except InvalidInputError as exc:
        click.echo(f"input error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    except (NumericalError, LgpcError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)


@click.group()
def main():
    """Local Gaussian partial correlation toolkit."""


@main.command()
@click.option("--input", "input_path", required=True, type=str)
@click.option("--output", "output_path", type=str, default=None)
def transform(input_path, output_path):
    """Write the normal-score pseudo-observations of a delimited dataset."""

    def body():
        names, x = _read_delimited(input_path)
        sample = to_pseudo_normal(x, names)
        lines = [",".join(names)]
        for row in sample.z:
            lines.append(",".join(f"{v:.15g}" for v in row))
        _write(output_path, "\n".join(lines) + "\n")

    _run(body)


@main.command(name="map")
@click.option("--input", "input_path", required=True, type=str)
@click.option("--output", "output_path", type=str, default=None)
@click.option("--x1", required=True, type=str)
@click.option("--x2", required=True, type=str)
@click.option("--cond", type=str, default=None, help="NAME=VALUE[,...] on the x-scale")
@click.option("--grid", "grid_n", type=int, default=15)
@click.option("--c", "c_const", type=float, default=4.0)
@click.option("--method", type=click.Choice(["trivariate", "pairwise"]), default=None)
def map_cmd(input_path, output_path, x1, x2, cond, grid_n, c_const, method):
    """Local partial correlation map over a rectangular grid in (x1, x2)."""

    def body():
        names, x = _read_delimited(input_path)
        for col in (x1, x2):
            if col not in names:
                raise InvalidInputError(f"unknown column '{col}'")
        cond_vals = _parse_cond(cond, names)
        cond_names = [n for n in names if n not in (x1, x2)]
        missing = [n for n in cond_names if n not in cond_vals]
        if missing:
            raise InvalidInputError(
                "conditioning values required for: " + ", ".join(missing)
            )
        order = [names.index(x1), names.index(x2)] + [names.index(n) for n in cond_names]
        data = x[:, order]
        sample = to_pseudo_normal(data, [names[j] for j in order])
        n, p = data.shape
        use_method = method or ("trivariate" if p == 3 else "pairwise")
        mode = "trivariate" if use_method == "trivariate" else "pairwise"
        bw = plugin_bandwidth(n, c_const, mode)

        # rectangular x-scale grid over the central quantile range
        ax1 = np.linspace(*np.quantile(data[:, 0], [0.02, 0.98]), grid_n)
        ax2 = np.linspace(*np.quantile(data[:, 1], [0.02, 0.98]), grid_n)
        cond_x = np.array([cond_vals[nm] for nm in cond_names])
        pts_x = np.empty((grid_n * grid_n, p))
        for i, v1 in enumerate(ax1):
            for j, v2 in enumerate(ax2):
                pts_x[i * grid_n + j] = np.concatenate(([v1, v2], cond_x))
        pts_z = np.array([x_to_z_point(sample.margins, q) for q in pts_x])

        fld = estimate_field(sample, pts_z, use_method, bw)
        ests = estimate_partial(fld, sample_z=sample.z, n=n)

        config = {
            "command": "map", "x1": x1, "x2": x2, "cond": cond_vals,
            "grid": grid_n, "c": c_const, "method": use_method,
            "bandwidth": bw.scalar(), "n": n,
        }
        lines = ["# config: " + json.dumps(config, sort_keys=True)]
        header = (
            [f"x_{x1}", f"x_{x2}"] + [f"x_{nm}" for nm in cond_names]
            + [f"z{j + 1}" for j in range(p)]
            + ["alpha", "std_err", "ci_low", "ci_high", "converged", "fell_back"]
        )
        lines.append(",".join(header))
        for k, est in enumerate(ests):
            se = est.std_err if est.std_err is not None else float("nan")
            lo = est.ci_low if est.ci_low is not None else float("nan")
            hi = est.ci_high if est.ci_high is not None else float("nan")
            row = (
                [f"{v:.15g}" for v in pts_x[k]]
                + [f"{v:.15g}" for v in pts_z[k]]
                + [f"{est.alpha:.15g}", f"{se:.15g}", f"{lo:.15g}", f"{hi:.15g}",
                   str(int(fld.converged[k])), str(int(fld.fell_back[k]))]
            )
            lines.append(",".join(row))
        _write(output_path, "\n".join(lines) + "\n")

    _run(body)


def _test_options(fn):
    fn = click.option("--B", "n_boot", type=int, default=500)(fn)
    fn = click.option("--c", "c_const", type=float, default=1.75)(fn)
    fn = click.option("--method", type=click.Choice(["trivariate", "pairwise"]),
                      default=None)(fn)
    fn = click.option("--h", "h_function", type=click.Choice(["square", "abs", "identity"]),
                      default="square")(fn)
    fn = click.option("--region", type=str, default=None)(fn)
    fn = click.option("--seed", type=int, default=0)(fn)
    return fn


def _make_config(n_boot, c_const, method, h_function, region, seed):
    return TestConfig(
        h_function=h_function,
        region=_parse_region(region),
        B=n_boot,
        c=c_const,
        method=method or "auto",
        seed=seed,
    )


@main.command()
@click.option("--input", "input_path", required=True, type=str)
@click.option("--output", "output_path", type=str, default=None)
@click.option("--x1", type=str, default=None)
@click.option("--x2", type=str, default=None)
@_test_options
@click.option("--json", "as_json", is_flag=True, default=True)
def test(input_path, output_path, x1, x2, n_boot, c_const, method, h_function,
         region, seed, as_json):
    """Conditional independence test of x1 vs x2 given the other columns."""

    def body():
        names, x = _read_delimited(input_path)
        if x1 or x2:
            if not (x1 and x2):
                raise InvalidInputError("--x1 and --x2 must be given together")
            for col in (x1, x2):
                if col not in names:
                    raise InvalidInputError(f"unknown column '{col}'")
            order = [names.index(x1), names.index(x2)] + [
                j for j, nm in enumerate(names) if nm not in (x1, x2)
            ]
            x_ord = x[:, order]
        else:
            x_ord = x
        config = _make_config(n_boot, c_const, method, h_function, region, seed)
        result = ci_test(x_ord, config)
        _write(output_path, json.dumps(result.to_dict(), indent=2) + "\n")

    _run(body)


@main.command()
@click.option("--input", "input_path", required=True, type=str)
@click.option("--output", "output_path", type=str, default=None)
@click.option("--x1", required=True, type=str)
@click.option("--x2", required=True, type=str)
@_test_options
@click.option("--json", "as_json", is_flag=True, default=True)
def granger(input_path, output_path, x1, x2, n_boot, c_const, method,
            h_function, region, seed, as_json):
    """Lag-1 Granger tests between two series, both directions."""

    def body():
        names, x = _read_delimited(input_path)
        for col in (x1, x2):
            if col not in names:
                raise InvalidInputError(f"unknown column '{col}'")
        s1 = x[:, names.index(x1)]
        s2 = x[:, names.index(x2)]
        config = _make_config(n_boot, c_const, method, h_function, region, seed)
        fwd = granger_test(s1, s2, config)
        rev = granger_test(s2, s1, config)
        doc = {
            f"{x1}->{x2}": fwd.to_dict(),
            f"{x2}->{x1}": rev.to_dict(),
        }
        _write(output_path, json.dumps(doc, indent=2) + "\n")

    _run(body)


@main.command()
@click.option("--output", "output_path", type=str, default=None)
@click.option("--dgp", "dgp_spec", required=True, type=str)
@click.option("--n", "n_obs", required=True, type=int)
@click.option("--seed", type=int, default=0)
def simulate(output_path, dgp_spec, n_obs, seed):
    """Simulate one sample from a data-generating process."""

    def body():
        dgp_id, family = _parse_dgp(dgp_spec)
        spec = DgpSpec(id=dgp_id, family=family, n=n_obs, seed=seed)
        data = generate(spec)
        names = ["x1", "x2"] + [f"x3_{k + 1}" for k in range(data.shape[1] - 2)]
        config = {"command": "simulate", "dgp": dgp_id, "family": family,
                  "n": n_obs, "seed": seed}
        lines = ["# config: " + json.dumps(config, sort_keys=True)]
        lines.append(",".join(names))
        for row in data:
            lines.append(",".join(f"{v:.15g}" for v in row))
        _write(output_path, "\n".join(lines) + "\n")

    _run(body)


@main.command(name="benchmark")
@click.option("--output", "output_path", type=str, default=None)
@click.option("--dgp", "dgp_spec", required=True, type=str,
              help="comma-separated process ids, e.g. 1,5 or 5p,9pp")
@click.option("--n", "n_obs", required=True, type=int)
@click.option("--reps", required=True, type=int)
@click.option("--B", "n_boot", type=int, default=100)
@click.option("--c", "c_const", type=float, default=1.0)
@click.option("--method", type=click.Choice(["trivariate", "pairwise"]), default=None)
@click.option("--h", "h_function", type=click.Choice(["square", "abs", "identity"]),
              default="square")
@click.option("--seed", type=int, default=0)
@click.option("--threads", type=int, default=1)
@click.option("--json", "as_json", is_flag=True, default=False)
def benchmark_cmd(output_path, dgp_spec, n_obs, reps, n_boot, c_const, method,
                  h_function, seed, threads, as_json):
    """Monte Carlo rejection rates of the test over simulated processes."""

    def body():
        parsed = [_parse_dgp(s) for s in dgp_spec.split(",")]
        families = {fam for _, fam in parsed}
        if len(families) > 1:
            raise InvalidInputError("all processes in one run must share a family")
        family = families.pop()
        ids = [i for i, _ in parsed]
        report = benchmark(
            ids, n_obs, reps, c=c_const, B=n_boot, family=family,
            h_function=h_function, method=method or "auto", seed=seed,
            threads=threads,
        )
        if as_json:
            _write(output_path, report.to_json() + "\n")
        else:
            _write(output_path, report.table())
            if output_path is not None:
                with open(output_path + ".json", "w") as fh:
                    fh.write(report.to_json() + "\n")

    _run(body)


if __name__ == "__main__":
    main()
