"""Line-oriented circuit files (``.mzc``).

One directive per line, ``#`` starts a comment, blank lines are ignored::

    rails <subsystem> <name>+
    init <subsystem> <rail>
    param <NAME> <real>
    stage bs <subsystem> <rail> <rail> t=<real|NAME>
    stage phase <subsystem> <rail> phi=<real|NAME>
    stage kerr <system-rail> <probe-rail> eps=<real|NAME>
    stage block <subsystem> <rail>
    stage cut <label>
    detector <NAME> <subsystem> <rail>
    darkport <system-rail>

Parameter names start with an uppercase letter; anything else in a
``key=value`` slot must be a real literal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .engine import fmt
from .errors import MZIError
from .model import (
    PARAM_NAME,
    PROBE,
    RAIL_NAME,
    SUBSYSTEMS,
    SYSTEM,
    BeamSplitter,
    Block,
    Circuit,
    Cut,
    Detector,
    Kerr,
    PhaseShift,
    validate_circuit,
)

REAL = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?\Z")
_TOKEN = re.compile(r"\S+")


@dataclass(frozen=True)
class SourceSpan:
    line: int
    col_start: int
    col_end: int


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    message: str
    expected: str | None = None

    def __str__(self):
        text = f"{self.span.line}:{self.span.col_start}: {self.message}"
        if self.expected:
            text += f" (expected {self.expected})"
        return text


class CircuitFileError(MZIError):
    """Carries every diagnostic found in one parse."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


@dataclass
class _Tok:
    text: str
    col: int  # 1-based

    @property
    def end(self):
        return self.col + len(self.text) - 1


class _NonRecoverable(Exception):
    pass


class _Parser:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.errors = []
        self.rails = {}
        self.inits = {}
        self.params = {}
        self.stages = []
        self.detectors = []
        self.dark_port = None
        # (scope, line number) for each declaration
        self.origin = {"rails": {}, "init": {}, "param": {}, "detector": [], "darkport": []}
        self.stage_lines = []

    def error(self, lineno, tok, message, expected=None):
        if tok is None:
            span = SourceSpan(lineno, 1, max(1, len(self.lines[lineno - 1]) if self.lines else 1))
        else:
            span = SourceSpan(lineno, tok.col, tok.end)
        self.errors.append(ParseError(span, message, expected))

    def run(self):
        for lineno, raw in enumerate(self.lines, start=1):
            body = raw.split("#", 1)[0]
            toks = [_Tok(m.group(), m.start() + 1) for m in _TOKEN.finditer(body)]
            if not toks:
                continue
            handler = getattr(self, "_d_" + toks[0].text, None)
            if handler is None:
                self.error(lineno, toks[0], f"unknown directive {toks[0].text!r}",
                           "rails, init, param, stage, detector or darkport")
                continue
            try:
                handler(lineno, toks)
            except _NonRecoverable:
                pass

        missing = False
        for sub in SUBSYSTEMS:
            if sub not in self.rails:
                self.error(self._last_line(), None, "missing rails declaration",
                           f"rails {sub} <name>+")
                missing = True
        for sub in SUBSYSTEMS:
            if sub not in self.inits:
                self.error(self._last_line(), None, "missing init declaration",
                           f"init {sub} <rail>")
                missing = True
        if missing:
            return None

        circuit = Circuit(
            system_rails=tuple(self.rails[SYSTEM]),
            probe_rails=tuple(self.rails[PROBE]),
            init_system=self.inits[SYSTEM],
            init_probe=self.inits[PROBE],
            stages=tuple(self.stages),
            detectors=tuple(self.detectors),
            params=self.params,
            dark_port=self.dark_port,
        )
        for diag in validate_circuit(circuit).diagnostics:
            self._map_diagnostic(diag)
        return circuit

    def _last_line(self):
        return max(1, len(self.lines))

    def _map_diagnostic(self, diag):
        if diag.stage is not None:
            candidates = [self.stage_lines[diag.stage]]
        elif diag.scope in ("rails", "init", "param"):
            candidates = list(self.origin[diag.scope].values())
        elif diag.scope in ("detector", "darkport"):
            candidates = list(self.origin[diag.scope])
        else:
            candidates = []
        candidates = candidates or [1]
        for lineno in candidates:
            tok = self._find_token(lineno, diag.token)
            if tok is not None or diag.token is None:
                break
        else:
            lineno, tok = candidates[0], None
        if tok is None and diag.rule == "transmittance out of range":
            tok = self._find_token(lineno, "t=", prefix=True)
        self.error(lineno, tok, diag.message)

    def _find_token(self, lineno, token, prefix=False):
        if token is None or lineno > len(self.lines):
            return None
        body = self.lines[lineno - 1].split("#", 1)[0]
        for m in _TOKEN.finditer(body):
            text = m.group()
            hit = text.startswith(token) if prefix else (
                text == token or text.split("=", 1)[-1] == token
            )
            if hit:
                return _Tok(text, m.start() + 1)
        return None

    # -------------------------------------------------------------- helpers

    def _arity(self, lineno, toks, n, usage, at_least=False):
        ok = len(toks) >= n if at_least else len(toks) == n
        if not ok:
            tok = toks[n] if len(toks) > n else toks[-1]
            self.error(lineno, tok, "wrong number of arguments", usage)
            raise _NonRecoverable
        return toks

    def _subsystem(self, lineno, tok):
        if tok.text not in SUBSYSTEMS:
            self.error(lineno, tok, f"unknown subsystem {tok.text!r}", "system or probe")
            raise _NonRecoverable
        return tok.text

    def _name(self, lineno, tok, what):
        if not RAIL_NAME.match(tok.text):
            self.error(lineno, tok, f"invalid {what} {tok.text!r}", "identifier")
            raise _NonRecoverable
        return tok.text

    def _real(self, lineno, tok, text=None):
        text = tok.text if text is None else text
        if not REAL.match(text):
            self.error(lineno, tok, f"malformed real {text!r}", "real number")
            raise _NonRecoverable
        return float(text)

    def _ref(self, lineno, tok, key):
        if not tok.text.startswith(key + "="):
            self.error(lineno, tok, f"expected {key}=<value>, got {tok.text!r}", f"{key}=<real|NAME>")
            raise _NonRecoverable
        value = tok.text[len(key) + 1:]
        if value[:1].isalpha() and value[:1].isupper():
            if not PARAM_NAME.match(value):
                self.error(lineno, tok, f"invalid parameter name {value!r}", "NAME")
                raise _NonRecoverable
            return value
        return self._real(lineno, tok, value)

    # ----------------------------------------------------------- directives

    def _d_rails(self, lineno, toks):
        self._arity(lineno, toks, 3, "rails <subsystem> <name>+", at_least=True)
        sub = self._subsystem(lineno, toks[1])
        if sub in self.rails:
            self.error(lineno, toks[1], f"rails for {sub} already declared")
            raise _NonRecoverable
        names, seen = [], set()
        for tok in toks[2:]:
            try:
                name = self._name(lineno, tok, "rail name")
            except _NonRecoverable:
                continue
            if name in seen:
                self.error(lineno, tok, f"duplicate rail {name!r}")
                continue
            seen.add(name)
            names.append(name)
        self.rails[sub] = names
        self.origin["rails"][sub] = lineno

    def _d_init(self, lineno, toks):
        self._arity(lineno, toks, 3, "init <subsystem> <rail>")
        sub = self._subsystem(lineno, toks[1])
        if sub in self.inits:
            self.error(lineno, toks[1], f"init for {sub} already declared")
            raise _NonRecoverable
        self.inits[sub] = self._name(lineno, toks[2], "rail name")
        self.origin["init"][sub] = lineno

    def _d_param(self, lineno, toks):
        self._arity(lineno, toks, 3, "param <NAME> <real>")
        name = toks[1].text
        if not PARAM_NAME.match(name):
            self.error(lineno, toks[1], f"invalid parameter name {name!r}",
                       "identifier starting with an uppercase letter")
            raise _NonRecoverable
        if name in self.params:
            self.error(lineno, toks[1], f"parameter {name!r} re-declared")
            raise _NonRecoverable
        self.params[name] = self._real(lineno, toks[2])
        self.origin["param"][name] = lineno

    def _d_detector(self, lineno, toks):
        self._arity(lineno, toks, 4, "detector <NAME> <subsystem> <rail>")
        name = self._name(lineno, toks[1], "detector name")
        sub = self._subsystem(lineno, toks[2])
        rail = toks[3].text
        self.detectors.append(Detector(name, sub, rail))
        self.origin["detector"].append(lineno)

    def _d_darkport(self, lineno, toks):
        self._arity(lineno, toks, 2, "darkport <system-rail>")
        if self.dark_port is not None:
            self.error(lineno, toks[0], "darkport already declared")
            raise _NonRecoverable
        self.dark_port = self._name(lineno, toks[1], "rail name")
        self.origin["darkport"].append(lineno)

    def _d_stage(self, lineno, toks):
        self._arity(lineno, toks, 2, "stage <kind> ...", at_least=True)
        kind = toks[1].text
        if kind == "bs":
            self._arity(lineno, toks, 6, "stage bs <subsystem> <rail> <rail> t=<real|NAME>")
            stage = BeamSplitter(
                self._subsystem(lineno, toks[2]),
                self._name(lineno, toks[3], "rail name"),
                self._name(lineno, toks[4], "rail name"),
                self._ref(lineno, toks[5], "t"),
            )
        elif kind == "phase":
            self._arity(lineno, toks, 5, "stage phase <subsystem> <rail> phi=<real|NAME>")
            stage = PhaseShift(
                self._subsystem(lineno, toks[2]),
                self._name(lineno, toks[3], "rail name"),
                self._ref(lineno, toks[4], "phi"),
            )
        elif kind == "kerr":
            self._arity(lineno, toks, 5, "stage kerr <system-rail> <probe-rail> eps=<real|NAME>")
            stage = Kerr(
                self._name(lineno, toks[2], "rail name"),
                self._name(lineno, toks[3], "rail name"),
                self._ref(lineno, toks[4], "eps"),
            )
        elif kind == "block":
            self._arity(lineno, toks, 4, "stage block <subsystem> <rail>")
            stage = Block(self._subsystem(lineno, toks[2]), self._name(lineno, toks[3], "rail name"))
        elif kind == "cut":
            self._arity(lineno, toks, 3, "stage cut <label>")
            stage = Cut(self._name(lineno, toks[2], "cut label"))
        else:
            self.error(lineno, toks[1], f"unknown stage kind {kind!r}", "bs, phase, kerr, block or cut")
            raise _NonRecoverable
        self.stages.append(stage)
        self.stage_lines.append(lineno)


def check(text: str) -> list[ParseError]:
    """All diagnostics for ``text``; empty when it describes a valid circuit."""
    parser = _Parser(text)
    parser.run()
    return sorted(parser.errors, key=lambda e: (e.span.line, e.span.col_start))


def parse(text: str) -> Circuit:
    """Parse a circuit, raising CircuitFileError with every diagnostic found."""
    parser = _Parser(text)
    circuit = parser.run()
    if parser.errors:
        raise CircuitFileError(sorted(parser.errors, key=lambda e: (e.span.line, e.span.col_start)))
    return circuit


def _ref(value):
    return value if isinstance(value, str) else fmt(value)


def serialize(circuit: Circuit) -> str:
    """Canonical text form; equal circuits give identical text."""
    out = [
        "rails system " + " ".join(circuit.system_rails),
        "rails probe " + " ".join(circuit.probe_rails),
        f"init system {circuit.init_system}",
        f"init probe {circuit.init_probe}",
    ]
    out += [f"param {name} {fmt(circuit.params[name])}" for name in sorted(circuit.params)]
    for s in circuit.stages:
        if isinstance(s, BeamSplitter):
            out.append(f"stage bs {s.subsystem} {s.rail_a} {s.rail_b} t={_ref(s.t)}")
        elif isinstance(s, PhaseShift):
            out.append(f"stage phase {s.subsystem} {s.rail} phi={_ref(s.phi)}")
        elif isinstance(s, Kerr):
            out.append(f"stage kerr {s.system_rail} {s.probe_rail} eps={_ref(s.eps)}")
        elif isinstance(s, Block):
            out.append(f"stage block {s.subsystem} {s.rail}")
        elif isinstance(s, Cut):
            out.append(f"stage cut {s.label}")
    out += [f"detector {d.name} {d.subsystem} {d.rail}" for d in circuit.detectors]
    if circuit.dark_port is not None:
        out.append(f"darkport {circuit.dark_port}")
    return "\n".join(out) + "\n"


def load(path) -> Circuit:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())
