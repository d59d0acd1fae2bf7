"""Command-line front end.

A thin client over the service layer: by default requests are handled in
process (same code path as the HTTP endpoints); `--server URL` routes them
to a running instance instead. Exit codes: 0 success, 2 invalid
parameters, 3 convergence/conditioning failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Optional

from .errors import ConvergenceError, DomainError
from .service.schemas import (AngleRequest, CdfRequest, CoeffsRequest,
                              VerifyRequest)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CONVERGENCE = 3


def _parse_range(text: str):
    """A single value or start:stop:step."""
    if ":" not in text:
        return [float(text)]
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("range must be start:stop:step")
    start, stop, step = (float(p) for p in parts)
    if step <= 0 or stop < start:
        raise ValueError("range needs step > 0 and stop >= start")
    out = []
    x = start
    while x <= stop + 1e-12 * max(abs(stop), 1.0):
        out.append(round(x, 12))
        x += step
    return out


class _Client:
    """Dispatches requests in process or to a remote server."""

    def __init__(self, server: Optional[str]):
        self.server = server.rstrip("/") if server else None

    def _remote(self, path: str, payload: dict) -> dict:
        import httpx
        resp = httpx.post(f"{self.server}{path}", json=payload, timeout=600.0)
        if resp.status_code == 422:
            raise DomainError(resp.text)
        if resp.status_code == 409:
            raise ConvergenceError(resp.text)
        resp.raise_for_status()
        return resp.json()

    def cdf(self, req: CdfRequest) -> dict:
        if self.server:
            return self._remote("/cdf", req.model_dump())
        from .service.app import handle_cdf
        return handle_cdf(req).model_dump()

    def coeffs(self, req: CoeffsRequest) -> dict:
        if self.server:
            return self._remote("/coeffs", req.model_dump())
        from .service.app import handle_coeffs
        return handle_coeffs(req).model_dump()

    def angle(self, req: AngleRequest) -> dict:
        if self.server:
            return self._remote("/angle", req.model_dump())
        from .service.app import handle_angle
        return handle_angle(req).model_dump()

    def verify(self, req: VerifyRequest) -> dict:
        if self.server:
            return self._remote("/verify", req.model_dump())
        from .service.app import handle_verify
        return handle_verify(req)

    def config(self) -> dict:
        if self.server:
            import httpx
            return httpx.get(f"{self.server}/config", timeout=60.0).json()
        from .service.app import config_defaults
        return {"defaults": config_defaults()}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gvx",
        description="Exact cdfs of the sum of squares, sample variance, U "
                    "and the sample-vector angle for i.i.d. gamma samples.")
    ap.add_argument("--server", help="base URL of a running service; "
                                     "default handles requests in process")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha", type=float, required=True,
                        help="gamma shape parameter")
    common.add_argument("--n", type=int, required=True, help="sample size")
    common.add_argument("--format", choices=["json", "csv", "table"],
                        default="json")

    c = sub.add_parser("cdf", parents=[common],
                       help="evaluate a cdf at a value or range")
    c.add_argument("--dist", choices=["ssq", "svar", "s", "u", "angle-tan"],
                   default="ssq")
    c.add_argument("--at", required=True,
                   help="evaluation point, or start:stop:step for a range")
    c.add_argument("--representation",
                   choices=["power", "mixture", "legendre", "fourier", "auto"],
                   default="auto")
    c.add_argument("--method", choices=["auto", "thm41", "thm42"],
                   default="auto")
    c.add_argument("--tol", type=float, default=1e-10)
    c.add_argument("--max-terms", type=int, default=None)
    c.add_argument("--max-j", type=int, default=None)
    c.add_argument("--lambda", dest="lambda_strategy",
                   choices=["sqrt_n", "moment", "fixed"], default="sqrt_n")
    c.add_argument("--lambda-value", type=float, default=None)

    k = sub.add_parser("coeffs", parents=[common],
                       help="dump beta, mu, gamma and delta tables")
    k.add_argument("--kmax", type=int, default=40)
    k.add_argument("--lambda", dest="lambda_strategy",
                   choices=["sqrt_n", "moment", "fixed"], default="sqrt_n")
    k.add_argument("--lambda-value", type=float, default=None)

    a = sub.add_parser("angle", parents=[common],
                       help="tangent-angle cdf coefficients or values")
    a.add_argument("--t", type=float, default=None)
    a.add_argument("--coeffs", action="store_true",
                   help="dump the polynomial coefficients")

    t = sub.add_parser("table", parents=[common],
                       help="cdf over a range, one CSV row per point")
    t.add_argument("--dist", choices=["ssq", "svar", "s", "u"], default="ssq")
    t.add_argument("--at", required=True, help="start:stop:step")
    t.add_argument("--representation",
                   choices=["power", "mixture", "legendre", "fourier", "auto"],
                   default="auto")
    t.add_argument("--method", choices=["auto", "thm41", "thm42"],
                   default="auto")
    t.add_argument("--tol", type=float, default=1e-10)

    v = sub.add_parser("verify", parents=[common],
                       help="Monte Carlo validation against the exact cdfs")
    v.add_argument("--samples", type=int, default=1_000_000)
    v.add_argument("--seed", type=int, default=20260808)
    v.add_argument("--json", action="store_true", dest="as_json",
                   help="force JSON output")

    cfg = sub.add_parser("config", help="print machine-readable defaults")
    cfg.add_argument("action", choices=["print"])

    srv = sub.add_parser("serve", help="run the HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    return ap


def _emit_cdf_rows(rows: list, fmt: str, out) -> None:
    if fmt == "json":
        if len(rows) == 1:
            json.dump(rows[0], out, indent=2)
        else:
            json.dump(rows, out, indent=2)
        out.write("\n")
        return
    writer = csv.writer(out)
    writer.writerow(["x", "cdf", "est_error", "terms_used", "representation"])
    for r in rows:
        writer.writerow([r["x"], repr(r["cdf"]), r["est_error"],
                         r["terms_used"], r["representation"]])


def _cmd_cdf(args, client: _Client) -> int:
    values = _parse_range(args.at)
    if args.dist == "angle-tan":
        rows = []
        for x in values:
            res = client.angle(AngleRequest(alpha=args.alpha, n=args.n, t=x))
            rows.append({"x": x, "cdf": res["cdf"], "est_error": 0.0,
                         "terms_used": 0, "representation": "angle-poly"})
    else:
        rows = []
        for x in values:
            req = CdfRequest(alpha=args.alpha, n=args.n, dist=args.dist,
                             at=x, representation=args.representation,
                             method=args.method, tol=args.tol,
                             max_terms=args.max_terms, max_j=args.max_j,
                             lambda_strategy=args.lambda_strategy,
                             lambda_value=args.lambda_value)
            rows.append(client.cdf(req))
    fmt = args.format if len(values) == 1 or args.format != "json" else args.format
    if len(values) > 1 and args.format == "json":
        fmt = "json"
    _emit_cdf_rows(rows, "csv" if (len(values) > 1 and fmt == "table") else fmt,
                   sys.stdout)
    return EXIT_OK


def _cmd_coeffs(args, client: _Client) -> int:
    req = CoeffsRequest(alpha=args.alpha, n=args.n, kmax=args.kmax,
                        lambda_strategy=args.lambda_strategy,
                        lambda_value=args.lambda_value)
    res = client.coeffs(req)
    if args.format == "json":
        json.dump(res, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        w = csv.writer(sys.stdout)
        w.writerow(["k", "beta_sign", "log_abs_beta", "mu", "gamma",
                    "delta_lambda"])
        for row in res["rows"]:
            w.writerow([row["k"], row["beta_sign"], row["log_abs_beta"],
                        row["mu"], row["gamma"], row["delta_lambda"]])
    return EXIT_OK


def _cmd_angle(args, client: _Client) -> int:
    req = AngleRequest(alpha=args.alpha, n=args.n,
                       t=None if args.coeffs else args.t)
    res = client.angle(req)
    if args.coeffs or args.t is None:
        if args.format == "csv":
            w = csv.writer(sys.stdout)
            w.writerow(["j", "a_2j"])
            for j, aj in enumerate(res["coefficients"]):
                w.writerow([j, repr(aj)])
        else:
            json.dump(res, sys.stdout, indent=2)
            sys.stdout.write("\n")
    else:
        json.dump(res, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return EXIT_OK


def _cmd_table(args, client: _Client) -> int:
    values = _parse_range(args.at)
    rows = []
    for x in values:
        req = CdfRequest(alpha=args.alpha, n=args.n, dist=args.dist, at=x,
                         representation=args.representation,
                         method=args.method, tol=args.tol)
        rows.append(client.cdf(req))
    _emit_cdf_rows(rows, "csv", sys.stdout)
    return EXIT_OK


def _cmd_verify(args, client: _Client) -> int:
    req = VerifyRequest(alpha=args.alpha, n=args.n, samples=args.samples,
                        seed=args.seed)
    res = client.verify(req)
    json.dump(res, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK if res.get("passed") else EXIT_CONVERGENCE


def main(argv: Optional[list] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    client = _Client(args.server)
    try:
        if args.command == "cdf":
            return _cmd_cdf(args, client)
        if args.command == "coeffs":
            return _cmd_coeffs(args, client)
        if args.command == "angle":
            return _cmd_angle(args, client)
        if args.command == "table":
            return _cmd_table(args, client)
        if args.command == "verify":
            return _cmd_verify(args, client)
        if args.command == "config":
            json.dump(client.config(), sys.stdout, indent=2)
            sys.stdout.write("\n")
            return EXIT_OK
        if args.command == "serve":
            import uvicorn

            from .service.app import app
            uvicorn.run(app, host=args.host, port=args.port)
            return EXIT_OK
    except DomainError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValueError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
