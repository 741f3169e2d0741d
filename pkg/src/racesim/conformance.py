"""Golden-fixture conformance client for the wire protocol.

Any server implementation must reproduce the shipped fixtures
byte-semantically: status codes exact, JSON bodies equal with numbers
compared at a relative tolerance and volatile fields (``inference_ms``)
checked only for presence and sign.  Fixtures run in filename order because
step-sequencing cases depend on earlier requests; the server under test is
expected to run the constant conformance policy (action [0.5, 0, 0, 0]).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import requests

CONFORMANCE_ACTION = (0.5, 0.0, 0.0, 0.0)
DEFAULT_REL_TOL = 1e-12


@dataclass(frozen=True)
class Fixture:
    name: str
    method: str
    path: str
    body: dict | None
    raw_body: str | None
    expect_status: int
    expect_body: dict | None
    ignore: tuple[str, ...]
    error_contains: str | None
    source: str


@dataclass
class FixtureResult:
    fixture: str
    ok: bool
    mismatches: list[str] = field(default_factory=list)


@dataclass
class ConformanceReport:
    results: list[FixtureResult]

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.results)

    def summary(self) -> str:
        lines = []
        for r in self.results:
            mark = "PASS" if r.ok else "FAIL"
            lines.append(f"[{mark}] {r.fixture}" + ("" if r.ok else f"  ({'; '.join(r.mismatches)})"))
        return "\n".join(lines)


def load_fixtures(fixture_dir: str | Path) -> list[Fixture]:
    """Load all ``*.json`` fixtures from a directory, sorted by filename."""
    out = []
    for p in sorted(Path(fixture_dir).glob("*.json")):
        doc = json.loads(p.read_text(encoding="utf-8"))
        expect = doc["expect"]
        out.append(
            Fixture(
                name=doc["name"],
                method=doc["method"].upper(),
                path=doc["path"],
                body=doc.get("body"),
                raw_body=doc.get("raw_body"),
                expect_status=int(expect["status"]),
                expect_body=expect.get("body"),
                ignore=tuple(expect.get("ignore", ())),
                error_contains=expect.get("error_contains"),
                source=p.name,
            )
        )
    if not out:
        raise FileNotFoundError(f"no fixtures found in {fixture_dir}")
    return out


def _compare(expected, actual, rel_tol: float, path: str, ignore: tuple[str, ...], out: list[str]):
    if path in ignore:
        return
    if isinstance(expected, dict):
        if not isinstance(actual, dict):
            out.append(f"{path}: expected object, got {type(actual).__name__}")
            return
        for k, v in expected.items():
            sub = f"{path}.{k}" if path else k
            if sub in ignore:
                continue
            if k not in actual:
                out.append(f"{sub}: missing in response")
                continue
            _compare(v, actual[k], rel_tol, sub, ignore, out)
        for k in actual:
            sub = f"{path}.{k}" if path else k
            if k not in expected and sub not in ignore:
                out.append(f"{sub}: unexpected field in response")
    elif isinstance(expected, list):
        if not isinstance(actual, list) or len(actual) != len(expected):
            out.append(f"{path}: array shape mismatch")
            return
        for i, (e, a) in enumerate(zip(expected, actual)):
            _compare(e, a, rel_tol, f"{path}[{i}]", ignore, out)
    elif isinstance(expected, bool) or isinstance(actual, bool):
        if expected is not actual:
            out.append(f"{path}: expected {expected!r}, got {actual!r}")
    elif isinstance(expected, (int, float)) and isinstance(actual, (int, float)):
        if not math.isclose(float(expected), float(actual), rel_tol=rel_tol, abs_tol=rel_tol):
            out.append(f"{path}: expected {expected!r}, got {actual!r}")
    elif expected != actual:
        out.append(f"{path}: expected {expected!r}, got {actual!r}")


def check_fixture(base_url: str, fx: Fixture, rel_tol: float = DEFAULT_REL_TOL) -> FixtureResult:
    url = base_url.rstrip("/") + fx.path
    if fx.raw_body is not None:
        resp = requests.request(
            fx.method, url, data=fx.raw_body.encode("utf-8"),
            headers={"Content-Type": "application/json"}, timeout=10,
        )
    elif fx.body is not None:
        resp = requests.request(fx.method, url, json=fx.body, timeout=10)
    else:
        resp = requests.request(fx.method, url, timeout=10)

    mismatches: list[str] = []
    if resp.status_code != fx.expect_status:
        mismatches.append(f"status: expected {fx.expect_status}, got {resp.status_code}")
    ctype = resp.headers.get("Content-Type", "")
    if not ctype.startswith("application/json"):
        mismatches.append(f"content-type: expected application/json, got {ctype!r}")
    try:
        body = resp.json()
    except ValueError:
        body = None
        mismatches.append("body: response is not JSON")

    if body is not None:
        if fx.expect_body is not None:
            _compare(fx.expect_body, body, rel_tol, "", fx.ignore, mismatches)
        if "inference_ms" in fx.ignore and isinstance(body, dict) and "inference_ms" in body:
            ms = body["inference_ms"]
            if not isinstance(ms, (int, float)) or isinstance(ms, bool) or ms < 0 or not math.isfinite(ms):
                mismatches.append("inference_ms: must be a non-negative finite number")
        if fx.error_contains is not None:
            err = body.get("error", "") if isinstance(body, dict) else ""
            if fx.error_contains not in str(err):
                mismatches.append(f"error: expected to mention {fx.error_contains!r}, got {err!r}")
    return FixtureResult(fixture=fx.name, ok=not mismatches, mismatches=mismatches)


def run_conformance(
    base_url: str,
    fixture_dir: str | Path,
    rel_tol: float = DEFAULT_REL_TOL,
) -> ConformanceReport:
    """Fire every fixture at a running server and collect the verdicts."""
    fixtures = load_fixtures(fixture_dir)
    return ConformanceReport([check_fixture(base_url, fx, rel_tol) for fx in fixtures])
