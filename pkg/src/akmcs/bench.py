"""Built-in limit states, the pinned brute-force reference, and the external
evaluator protocol for expensive performance functions.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import threading

import numpy as np

# Brute-force Monte Carlo baseline for the modified Rastrigin limit state
# (standard normal inputs): 40 independent batches of 1e6 crude samples.
RASTRIGIN_REFERENCE_PF = 0.07302645
RASTRIGIN_REFERENCE_PF_SE = 4.4e-5


class ExternalEvaluatorFailure(RuntimeError):
    """The external evaluator died, timed out or sent a malformed reply."""


def rastrigin(x):
    """g(x1, x2) = 10 - sum_i (x_i^2 - 5 cos(2 pi x_i)); failure is g <= 0."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != 2:
        raise ValueError("rastrigin is defined on 2-dimensional inputs")
    g = 10.0 - np.sum(pts**2 - 5.0 * np.cos(2.0 * np.pi * pts), axis=1)
    return float(g[0]) if single else g


def linear_gaussian(x, beta: float):
    """g(x) = beta - x1: closed-form P_f = Phi(-beta) under a standard normal."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != 1:
        raise ValueError("linear_gaussian is defined on 1-dimensional inputs")
    g = beta - pts[:, 0]
    return float(g[0]) if single else g


class LimitState:
    """A performance function with an exact call counter.

    ``evaluate`` increments the counter once per point; fantasy responses never
    pass through here, so the counter matches the real evaluation budget.
    ``evaluate_reference`` (built-ins only) bypasses the counter and exists for
    benchmark bookkeeping such as the same-pool Monte Carlo reference.
    """

    name = "abstract"
    dimension = 0

    def __init__(self):
        self.n_calls = 0

    def _call(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[0] == 0:
            raise ValueError("points must be nonempty")
        if pts.shape[1] != self.dimension:
            raise ValueError(f"{self.name} expects dimension {self.dimension}")
        return pts

    def evaluate(self, points) -> np.ndarray:
        pts = self._check(points)
        out = np.asarray(self._call(pts), dtype=float)
        self.n_calls += pts.shape[0]
        return out

    def evaluate_reference(self, points) -> np.ndarray:
        """Uncounted evaluation for reference bookkeeping (built-ins only)."""
        return np.asarray(self._call(self._check(points)), dtype=float)

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class RastriginLimitState(LimitState):
    name = "rastrigin"
    dimension = 2

    def _call(self, points):
        return rastrigin(points)


class LinearGaussianLimitState(LimitState):
    name = "linear_gaussian"
    dimension = 1

    def __init__(self, beta: float = 2.0):
        super().__init__()
        self.beta = float(beta)

    def _call(self, points):
        return linear_gaussian(points, self.beta)


class ExternalLimitState(LimitState):
    """Wraps a child process speaking the line-JSON protocol.

    One request per batch: a JSON array of points terminated by a newline on
    stdin; the reply is one line holding a JSON array of responses of equal
    length. Any protocol violation (nonzero exit, timeout, length mismatch,
    malformed JSON) raises ExternalEvaluatorFailure.
    """

    name = "external"

    def __init__(self, command, dimension: int, timeout: float = 300.0):
        super().__init__()
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.dimension = int(dimension)
        self.timeout = float(timeout)
        self._proc: subprocess.Popen | None = None

    def _ensure_proc(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as exc:
                raise ExternalEvaluatorFailure(f"cannot start evaluator: {exc}") from exc
        return self._proc

    def _readline(self, proc: subprocess.Popen) -> str:
        result: list[str] = []

        def reader():
            result.append(proc.stdout.readline())

        thread = threading.Thread(target=reader, daemon=True)
        thread.start()
        thread.join(self.timeout)
        if thread.is_alive():
            proc.kill()
            raise ExternalEvaluatorFailure(f"evaluator timed out after {self.timeout:g} s")
        return result[0] if result else ""

    def _call(self, points):
        proc = self._ensure_proc()
        try:
            proc.stdin.write(json.dumps([list(map(float, p)) for p in points]) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ExternalEvaluatorFailure(f"evaluator pipe broken: {exc}") from exc
        line = self._readline(proc)
        if not line:
            code = proc.poll()
            raise ExternalEvaluatorFailure(f"evaluator closed its output (exit status {code})")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExternalEvaluatorFailure(f"malformed reply: {exc}") from exc
        if not isinstance(reply, list) or len(reply) != len(points):
            raise ExternalEvaluatorFailure(
                f"reply length {len(reply) if isinstance(reply, list) else 'n/a'} "
                f"does not match request length {len(points)}"
            )
        try:
            return np.array([float(v) for v in reply])
        except (TypeError, ValueError) as exc:
            raise ExternalEvaluatorFailure(f"non-numeric reply entries: {exc}") from exc

    def evaluate_reference(self, points):
        raise ExternalEvaluatorFailure("external evaluators have no uncounted reference path")

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc = None


def make_limit_state(kind: str, **params) -> LimitState:
    kind = str(kind).strip().lower()
    if kind == "rastrigin":
        return RastriginLimitState()
    if kind == "linear_gaussian":
        return LinearGaussianLimitState(beta=float(params.get("beta", 2.0)))
    if kind == "external":
        if "command" not in params or "dimension" not in params:
            raise ValueError("external limit state needs 'command' and 'dimension'")
        return ExternalLimitState(
            params["command"], int(params["dimension"]), float(params.get("timeout", 300.0))
        )
    raise ValueError(f"unknown limit state {kind!r}")
