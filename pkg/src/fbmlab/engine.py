"""Exact-in-law sampling of fractional Brownian motion on uniform grids.

Two samplers are provided.  The Cholesky sampler factorizes the dense path
covariance and is exact for any Hurst index, at O(n^3) setup cost, so it is
capped at moderate grid sizes and serves as the reference.  The circulant
sampler embeds the increment autocovariance in a circulant matrix whose
eigenvalues come from one real FFT; a draw then costs O(n log n), which is
what the Monte Carlo layers use.

Randomness is organised around per-path SFC64 streams keyed by
(seed, path index).  Path i of any batch is generated from its own stream,
so its values do not depend on how many paths were requested or how work
was chunked across processes.
"""

import numpy as np
import scipy.fft

DEFAULT_CHOLESKY_CAP = 2048

# Relative diagonal jitter applied once if the exact covariance fails to
# factor (near-singular grids, e.g. H close to 1).
_JITTER_REL = 1e-12

PATH_KINDS = ("raw_fbm", "trended")


class SamplingError(RuntimeError):
    """Base class for sampler failures."""


class FactorizationError(SamplingError):
    """Cholesky factorization failed even after the jitter retry."""


class EmbeddingError(SamplingError):
    """Circulant embedding stayed indefinite after one doubling."""


class ModelParams:
    """Model parameters for B_H(t) - t^{2H}/2 + mu*t on [0, T].

    sigma is part of the signature for completeness but pinned to 1; the
    rest of the library normalizes the variance away.
    """

    __slots__ = ("H", "mu", "T", "sigma")

    def __init__(self, H: float, mu: float, T: float, sigma: float = 1.0):
        H = float(H)
        T = float(T)
        if not 0.0 < H < 1.0:
            raise ValueError(f"Hurst index must lie in (0, 1), got H={H}")
        if not T > 0.0 or not np.isfinite(T):
            raise ValueError(f"horizon must be positive and finite, got T={T}")
        if sigma != 1.0:
            raise ValueError(f"sigma is fixed at 1.0, got sigma={sigma}")
        if not np.isfinite(mu):
            raise ValueError(f"drift must be finite, got mu={mu}")
        self.H = H
        self.mu = float(mu)
        self.T = T
        self.sigma = 1.0

    def __repr__(self):
        return f"ModelParams(H={self.H}, mu={self.mu}, T={self.T})"

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (self.H, self.mu, self.T) == (other.H, other.mu, other.T)

    def __hash__(self):
        return hash((self.H, self.mu, self.T))


class GridSpec:
    """Uniform grid t_k = k*T/n_steps, k = 0..n_steps."""

    __slots__ = ("n_steps", "T")

    def __init__(self, n_steps: int, T: float):
        n_steps = int(n_steps)
        T = float(T)
        if n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {n_steps}")
        if not T > 0.0 or not np.isfinite(T):
            raise ValueError(f"horizon must be positive and finite, got T={T}")
        self.n_steps = n_steps
        self.T = T

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    def times(self) -> np.ndarray:
        # linspace pins the endpoint to exactly T
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def __repr__(self):
        return f"GridSpec(n_steps={self.n_steps}, T={self.T})"

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (self.n_steps, self.T) == (other.n_steps, other.T)

    def __hash__(self):
        return hash((self.n_steps, self.T))


class FbmPath:
    """A single sampled path: values on a GridSpec plus its provenance.

    values[0] is always 0 (both raw and trended paths start at the origin).
    The array is locked read-only so a path can be shared freely.
    """

    __slots__ = ("values", "grid", "seed", "kind")

    def __init__(self, values, grid: GridSpec, seed: int, kind: str):
        values = np.array(values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != grid.n_steps + 1:
            raise ValueError(
                f"values must have length n_steps+1={grid.n_steps + 1}, "
                f"got shape {values.shape}"
            )
        if kind not in PATH_KINDS:
            raise ValueError(f"kind must be one of {PATH_KINDS}, got {kind!r}")
        if values[0] != 0.0:
            raise ValueError(f"paths start at the origin; values[0]={values[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("path contains non-finite values")
        values.flags.writeable = False
        self.values = values
        self.grid = grid
        self.seed = int(seed)
        self.kind = kind

    def __repr__(self):
        return (
            f"FbmPath(kind={self.kind!r}, n_steps={self.grid.n_steps}, "
            f"T={self.grid.T}, seed={self.seed})"
        )


def fbm_covariance(s, t, H):
    """Covariance of standard fBm: (s^{2H} + t^{2H} - |t-s|^{2H}) / 2.

    Accepts scalars or broadcastable arrays of nonnegative times.
    """
    H = float(H)
    if not 0.0 < H < 1.0:
        raise ValueError(f"Hurst index must lie in (0, 1), got H={H}")
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(s < 0.0) or np.any(t < 0.0):
        raise ValueError("fbm_covariance expects nonnegative times")
    h2 = 2.0 * H
    out = 0.5 * (s**h2 + t**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def _covariance_matrix(times: np.ndarray, H: float) -> np.ndarray:
    h2 = 2.0 * H
    pw = times**h2
    return 0.5 * (pw[:, None] + pw[None, :] - np.abs(times[:, None] - times[None, :]) ** h2)


# (n_steps, T, H) -> lower-triangular factor of the covariance at times t_1..t_n.
# Reads and writes race benignly under the GIL; worst case the factor is
# computed twice.
_cholesky_cache: dict = {}


def _cholesky_factor(grid: GridSpec, H: float) -> np.ndarray:
    key = (grid.n_steps, grid.T, H)
    L = _cholesky_cache.get(key)
    if L is not None:
        return L
    times = grid.times()[1:]
    cov = _covariance_matrix(times, H)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = _JITTER_REL * grid.T ** (2.0 * H)
        try:
            L = np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(
                f"Cholesky factorization failed for n_steps={grid.n_steps}, "
                f"H={H} (jitter {jitter:.3e} did not help)"
            ) from exc
    _cholesky_cache[key] = L
    return L


def _fgn_autocovariance(n_lags: int, dt: float, H: float) -> np.ndarray:
    j = np.arange(n_lags, dtype=np.float64)
    h2 = 2.0 * H
    return 0.5 * dt**h2 * (np.abs(j - 1) ** h2 - 2.0 * j**h2 + (j + 1) ** h2)


def _embedding_size(n_steps: int) -> int:
    m = 1
    while m < 2 * n_steps:
        m *= 2
    return m


# (n_steps, T, H) -> (m, sqrt(m * eigenvalues)); same benign-race caching
# as the Cholesky factor.
_circulant_cache: dict = {}


def _circulant_sqrt_eigs(grid: GridSpec, H: float):
    key = (grid.n_steps, grid.T, H)
    hit = _circulant_cache.get(key)
    if hit is not None:
        return hit
    dt = grid.dt
    m = _embedding_size(grid.n_steps)
    for attempt in range(2):
        gamma = _fgn_autocovariance(m // 2 + 1, dt, H)
        row = np.concatenate([gamma, gamma[-2:0:-1]])
        eigs = scipy.fft.rfft(row).real
        worst = eigs.min()
        if worst >= -1e-10 * eigs.max():
            sqrt_eigs = np.sqrt(m * np.clip(eigs, 0.0, None))
            _circulant_cache[key] = (m, sqrt_eigs)
            return m, sqrt_eigs
        if attempt == 0:
            m *= 2
    raise EmbeddingError(
        f"circulant embedding stayed indefinite for n_steps={grid.n_steps}, "
        f"H={H}: min eigenvalue {worst:.3e} after one doubling"
    )


def _path_rng(seed: int, path_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.SFC64(ss))


def sample_raw_block(
    grid: GridSpec,
    H: float,
    seed: int,
    start: int,
    stop: int,
    *,
    method: str = "circulant",
    dtype=np.float64,
    cholesky_cap: int = DEFAULT_CHOLESKY_CAP,
) -> np.ndarray:
    """Sample raw fBm paths with indices start..stop-1 of the batch `seed`.

    Returns an array of shape (stop-start, n_steps+1) whose rows depend only
    on (grid, H, seed, row index, method, dtype) -- never on the block
    boundaries.  dtype float32 is the fast lane for large Monte Carlo runs;
    the sampled law is the same, only the draw stream and rounding differ.
    """
    if not 0.0 < float(H) < 1.0:
        raise ValueError(f"Hurst index must lie in (0, 1), got H={H}")
    if stop < start or start < 0:
        raise ValueError(f"bad block indices [{start}, {stop})")
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise ValueError(f"dtype must be float32 or float64, got {dtype}")
    k = stop - start
    n = grid.n_steps
    out = np.empty((k, n + 1), dtype=dtype)
    out[:, 0] = 0.0
    if k == 0:
        return out

    if method == "circulant":
        m, sqrt_eigs = _circulant_sqrt_eigs(grid, H)
        half = m // 2 + 1
        cplx = np.complex128 if dtype == np.float64 else np.complex64
        spec = np.empty((k, half), dtype=cplx)
        inv_sqrt2 = dtype.type(1.0) / np.sqrt(dtype.type(2.0))
        for i in range(k):
            z = _path_rng(seed, start + i).standard_normal((half, 2), dtype=dtype)
            w = spec[i]
            w.real = z[:, 0]
            w.imag = z[:, 1]
            w *= inv_sqrt2
            w[0] = z[0, 0]
            w[-1] = z[-1, 0]
        spec *= sqrt_eigs.astype(dtype)
        increments = scipy.fft.irfft(spec, n=m, axis=1, overwrite_x=True)[:, :n]
        np.cumsum(increments, axis=1, out=out[:, 1:])
    elif method == "cholesky":
        if n > cholesky_cap:
            raise SamplingError(
                f"n_steps={n} exceeds the Cholesky cap ({cholesky_cap}); "
                "use the circulant sampler or raise cholesky_cap"
            )
        L = _cholesky_factor(grid, H)
        # One gemv per path: a batched gemm would reorder the sums with k,
        # breaking bitwise block independence.
        for i in range(k):
            z = _path_rng(seed, start + i).standard_normal(n)
            out[i, 1:] = (L @ z).astype(dtype)
    else:
        raise ValueError(f"unknown sampler method {method!r}")
    return out


def sample_fbm_cholesky(
    grid: GridSpec, H: float, seed: int, *, cholesky_cap: int = DEFAULT_CHOLESKY_CAP
) -> FbmPath:
    """One exact fBm path via dense Cholesky; identical to batch row 0."""
    values = sample_raw_block(
        grid, H, seed, 0, 1, method="cholesky", cholesky_cap=cholesky_cap
    )[0]
    return FbmPath(values, grid, seed, "raw_fbm")


def sample_fbm_circulant(grid: GridSpec, H: float, seed: int) -> FbmPath:
    """One exact fBm path via circulant embedding; identical to batch row 0."""
    values = sample_raw_block(grid, H, seed, 0, 1, method="circulant")[0]
    return FbmPath(values, grid, seed, "raw_fbm")


def trend_offset(times: np.ndarray, params: ModelParams) -> np.ndarray:
    """Deterministic part of the model: -t^{2H}/2 + mu*t."""
    times = np.asarray(times, dtype=np.float64)
    return params.mu * times - 0.5 * times ** (2.0 * params.H)


def apply_trend(path: FbmPath, params: ModelParams) -> FbmPath:
    """Turn a raw fBm path into a path of X_t = B_H(t) - t^{2H}/2 + mu*t."""
    if path.kind != "raw_fbm":
        raise ValueError(f"expected a raw_fbm path, got kind={path.kind!r}")
    if path.grid.T != params.T:
        raise ValueError(
            f"grid horizon T={path.grid.T} does not match params.T={params.T}"
        )
    values = path.values + trend_offset(path.grid.times(), params)
    return FbmPath(values, path.grid, path.seed, "trended")


def dump_path_csv(path: FbmPath, target) -> None:
    """Write a path as CSV with header ``t,value`` at 17 significant digits.

    `target` is a filesystem path or an open text file.
    """
    times = path.grid.times()
    if hasattr(target, "write"):
        _write_path_rows(target, times, path.values)
    else:
        with open(target, "w", encoding="ascii", newline="\n") as fh:
            _write_path_rows(fh, times, path.values)


def _write_path_rows(fh, times, values):
    fh.write("t,value\n")
    for t, v in zip(times, values):
        fh.write(f"{t:.17g},{v:.17g}\n")
