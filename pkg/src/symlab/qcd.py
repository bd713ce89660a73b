"""Quasi-particle equation of state for a gluon + light quark + strange quark gas.

Per unit volume, with ``E = sqrt(p^2 + m^2)``::

    ln Z_boson   = -(d / 2 pi^2) * int p^2 ln(1 - exp(-E/T)) dp
    ln Z_fermion = +(d / 2 pi^2) * int p^2 ln(1 + exp(-E/T)) dp

Both are positive. ``P = T ln Z``, ``eps = T^2 d(ln Z)/dT`` (taken numerically
so temperature-dependent masses are included), and ``s = (eps + P) / T``.
Units are GeV throughout.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ._validation import check_array, check_int, check_is_fitted, check_real
from .autodiff import layers as L
from .autodiff.network import Network, NetworkSpec
from .autodiff.optim import Optimizer, TrainConfig
from .exceptions import FormatError, InvalidArgumentError, NumericalDomainError, TrainingDivergedError
from .expansion import expand_vector
from .numerics import gauss_legendre, integrate_semi_infinite
from .numerics.random import Prng

T_C = 0.155
SCALE_FACTOR = 5.0
SPECIES = ("g", "ud", "s")


@dataclass(frozen=True)
class DofConstants:
    d_g: int = 16
    d_s: int = 12
    d_ud: int = 24

    def of(self, species):
        return {"g": self.d_g, "ud": self.d_ud, "s": self.d_s}[species]


DOF = DofConstants()
STATISTICS = {"g": "boson", "ud": "fermion", "s": "fermion"}


def default_rule(n=50):
    return gauss_legendre(n)


def _thermal_log(x, statistics):
    # sign-adjusted so both species give a positive contribution
    if statistics == "boson":
        return -np.log1p(-np.exp(-x))
    return np.log1p(np.exp(-x))


def _check_mT(m, T):
    check_real(T, "T", positive=True)
    check_real(m, "m", nonnegative=True)


def lnz_boson(m, T, d=DOF.d_g, rule=None):
    """``ln Z / V`` of a free Bose gas of mass ``m`` at temperature ``T``.

    Examples
    --------
    >>> T = 0.3
    >>> round(T * lnz_boson(0.0, T) / (16 * math.pi**2 * T**4 / 90), 9)
    1.0
    """
    _check_mT(m, T)
    rule = rule or default_rule()
    f = lambda p: p * p * _thermal_log(np.sqrt(p * p + m * m) / T, "boson")  # noqa: E731
    return d / (2 * math.pi**2) * integrate_semi_infinite(f, rule, SCALE_FACTOR * T)


def lnz_fermion(m, T, d=DOF.d_ud, rule=None):
    """``ln Z / V`` of a free Fermi gas (particles plus antiparticles folded into ``d``)."""
    _check_mT(m, T)
    rule = rule or default_rule()
    f = lambda p: p * p * _thermal_log(np.sqrt(p * p + m * m) / T, "fermion")  # noqa: E731
    return d / (2 * math.pi**2) * integrate_semi_infinite(f, rule, SCALE_FACTOR * T)


def energy_density_fixed_mass(m, T, d, statistics, rule=None):
    """``(d / 2 pi^2) int p^2 E / (exp(E/T) -+ 1) dp`` for a mass that does not depend on T."""
    _check_mT(m, T)
    rule = rule or default_rule()
    sign = -1.0 if statistics == "boson" else 1.0

    def f(p):
        e = np.sqrt(p * p + m * m)
        with np.errstate(over="ignore"):  # exp overflow -> occupation 0
            return p * p * e / (np.expm1(e / T) + (sign + 1.0))

    return d / (2 * math.pi**2) * integrate_semi_infinite(f, rule, SCALE_FACTOR * T)


def stefan_boltzmann_pressure(T, d, statistics):
    p = d * math.pi**2 * T**4 / 90
    return p if statistics == "boson" else 7.0 / 8.0 * p


# vectorised forms used while fitting; same nodes and formulas as above


def _lnz_and_dm(m, T, d, statistics, rule):
    """``ln Z / V`` and its mass derivative for arrays ``m``, ``T`` of equal shape."""
    p, w = rule.semi_infinite_nodes(1.0)
    p = SCALE_FACTOR * T[:, None] * p[None, :]
    w = SCALE_FACTOR * T[:, None] * w[None, :]
    e = np.sqrt(p * p + (m * m)[:, None])
    x = e / T[:, None]
    pref = d / (2 * math.pi**2)
    lnz = pref * np.sum(w * p * p * _thermal_log(x, statistics), axis=1)
    with np.errstate(over="ignore"):
        occ = 1.0 / np.expm1(x) if statistics == "boson" else 1.0 / (np.exp(x) + 1.0)
    dm = -pref * (m / T) * np.sum(w * p * p * occ / e, axis=1)
    if not (np.all(np.isfinite(lnz)) and np.all(np.isfinite(dm))):
        raise NumericalDomainError("non-finite partition function during fitting")
    return lnz, dm


# --------------------------------------------------------------------------- mass models


class ConstantMass:
    kind = "constant"

    def __init__(self, m):
        self.m = check_real(m, "m", nonnegative=True)

    def __call__(self, T):
        return np.full(np.shape(T), self.m) if np.ndim(T) else self.m

    def to_dict(self):
        return {"kind": self.kind, "m": self.m}


class TableMass:
    """Piecewise-linear ``m(T)`` through tabulated points; no extrapolation."""

    kind = "table"

    def __init__(self, T, m):
        self.T = check_array(T, "T", ndim=1, min_rows=2)
        self.m = check_array(m, "m", ndim=1)
        if self.T.shape != self.m.shape:
            raise InvalidArgumentError("T and m tables differ in length")
        if np.any(np.diff(self.T) <= 0):
            raise InvalidArgumentError("T table must be strictly ascending")
        if np.any(self.m < 0):
            raise InvalidArgumentError("tabulated masses must be >= 0")

    def __call__(self, T):
        t = np.asarray(T, dtype=np.float64)
        if np.any(t < self.T[0]) or np.any(t > self.T[-1]):
            raise InvalidArgumentError(
                f"T outside the table range [{self.T[0]}, {self.T[-1]}]"
            )
        out = np.interp(t, self.T, self.m)
        return float(out) if np.ndim(T) == 0 else out

    def to_dict(self):
        return {"kind": self.kind, "T": self.T.tolist(), "m": self.m.tolist()}


def mass_network_spec(input_mode, hidden=32):
    n_in = 1 if input_mode == "raw" else 2
    layers = (L.dense(hidden), L.sigmoid(), L.dense(hidden), L.sigmoid(), L.dense(1), L.softplus())
    return NetworkSpec(input_shape=(n_in,), layers=layers, loss="mse")


def mass_inputs(T, input_mode, t_c=T_C):
    """Network inputs: ``[T]`` (raw) or ``[T, T_c]`` (expanded)."""
    T = np.atleast_1d(np.asarray(T, dtype=np.float64))
    if input_mode == "raw":
        return T[:, None]
    if input_mode == "expanded":
        return np.array([expand_vector([t], [t_c], pattern="append") for t in T])
    raise InvalidArgumentError(f"input_mode must be 'raw' or 'expanded', got {input_mode!r}")


class MLPMass:
    """``m(T)`` from a small sigmoid MLP with a softplus output.

    Outputs are clamped at zero; ``clamped`` counts how often that happened.
    """

    kind = "mlp"

    def __init__(self, network, params, input_mode="raw", t_c=T_C):
        self.network = network
        self.params = params
        self.input_mode = input_mode
        self.t_c = t_c
        self.clamped = 0

    def __call__(self, T):
        out, _ = self.network.run(self.params, mass_inputs(T, self.input_mode, self.t_c), False, None)
        out = out[:, 0]
        neg = out < 0
        self.clamped += int(neg.sum())
        out = np.where(neg, 0.0, out)
        return float(out[0]) if np.ndim(T) == 0 else out

    def to_dict(self):
        return {
            "kind": self.kind,
            "input_mode": self.input_mode,
            "t_c": self.t_c,
            "network": self.network.spec.to_dict(),
            "params": self.params.flat.tolist(),
        }


# --------------------------------------------------------------------------- equation of state


@dataclass(frozen=True)
class ThermoPoint:
    """One equation-of-state point; ``s`` must equal ``(eps + P) / T``."""

    T: float
    P: float
    eps: float
    s: float

    def __post_init__(self):
        check_real(self.T, "T", positive=True)
        ref = (self.eps + self.P) / self.T
        if abs(self.s - ref) > 1e-10 * max(abs(ref), abs(self.s), 1e-300):
            raise InvalidArgumentError(f"s={self.s} violates s = (eps + P) / T = {ref}")

    @classmethod
    def from_p_eps(cls, T, P, eps):
        return cls(T, P, eps, (eps + P) / T)


def lnz_total(T, models, rule=None):
    """Sum of the three species' ``ln Z / V`` with masses ``models[k](T)``."""
    rule = rule or default_rule()
    return (
        lnz_boson(float(models["g"](T)), T, DOF.d_g, rule)
        + lnz_fermion(float(models["ud"](T)), T, DOF.d_ud, rule)
        + lnz_fermion(float(models["s"](T)), T, DOF.d_s, rule)
    )


def _as_models(models):
    missing = set(SPECIES) - set(models)
    if missing:
        raise InvalidArgumentError(f"mass models missing for {sorted(missing)}")
    return {k: (ConstantMass(v) if isinstance(v, (int, float)) else v) for k, v in models.items()}


def eos_point(T, models, rule=None, dT=None):
    """Pressure, energy density and entropy density at temperature ``T``.

    ``models`` maps ``"g"``, ``"ud"`` and ``"s"`` to mass models (or plain
    numbers for constant masses). ``dT`` defaults to ``T / 200``.
    """
    T = check_real(T, "T", positive=True)
    models = _as_models(models)
    dT = T / 200 if dT is None else check_real(dT, "dT", positive=True)
    if T - dT <= 0:
        raise InvalidArgumentError(f"T - dT must be positive, got {T - dT}")
    rule = rule or default_rule()
    lnz = lnz_total(T, models, rule)
    dlnz = (lnz_total(T + dT, models, rule) - lnz_total(T - dT, models, rule)) / (2 * dT)
    return ThermoPoint.from_p_eps(T, T * lnz, T * T * dlnz)


# --------------------------------------------------------------------------- tables


@dataclass
class EosTable:
    """Rows of ``(T, P/T^4, eps/T^4)``; ``s/T^3`` is derived."""

    T: np.ndarray
    p_over_t4: np.ndarray
    eps_over_t4: np.ndarray

    def __post_init__(self):
        self.T = check_array(self.T, "T", ndim=1)
        self.p_over_t4 = check_array(self.p_over_t4, "P/T^4", ndim=1)
        self.eps_over_t4 = check_array(self.eps_over_t4, "eps/T^4", ndim=1)
        if not (self.T.shape == self.p_over_t4.shape == self.eps_over_t4.shape):
            raise InvalidArgumentError("EoS columns differ in length")

    def __len__(self):
        return self.T.size

    @property
    def s_over_t3(self):
        return self.p_over_t4 + self.eps_over_t4

    @classmethod
    def from_points(cls, points):
        T = np.array([p.T for p in points])
        return cls(T, np.array([p.P for p in points]) / T**4, np.array([p.eps for p in points]) / T**4)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T_GeV", "P_over_T4", "eps_over_T4", "s_over_T3"])
            for row in zip(self.T, self.p_over_t4, self.eps_over_t4, self.s_over_t3):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path):
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:3] != ["T_GeV", "P_over_T4", "eps_over_T4"]:
            raise FormatError(f"{path}: header must start with T_GeV,P_over_T4,eps_over_T4")
        try:
            data = np.array([[float(v) for v in r[:3]] for r in rows[1:] if r], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
        if data.size == 0:
            raise FormatError(f"{path}: no data rows")
        return cls(data[:, 0], data[:, 1], data[:, 2])


def eos_table(T_grid, models, rule=None):
    return EosTable.from_points([eos_point(float(t), models, rule) for t in T_grid])


SYNTHETIC_MASSES = {"g": 0.6, "ud": 0.3, "s": 0.4}


def synthetic_target(n=20, t_min=0.1, t_max=0.5, masses=SYNTHETIC_MASSES, rule=None):
    """EoS table produced by :func:`eos_point` with constant masses."""
    n = check_int(n, "n", min_value=2)
    return eos_table(np.linspace(t_min, t_max, n), masses, rule)


# --------------------------------------------------------------------------- fitting


def _init_models(input_mode, hidden, seed, t_c):
    spec = mass_network_spec(input_mode, hidden)
    root = Prng(seed).substream("qcd_init")
    out = {}
    for k in SPECIES:
        net = Network(spec)
        out[k] = MLPMass(net, net.init_state(root.substream(k)), input_mode, t_c)
    return out


def _predict_rows(models, T, rule, with_grad=False):
    """Model ``P/T^4`` and ``eps/T^4`` for each row (and the tapes for backprop)."""
    dT = T / 200
    temps = np.concatenate([T - dT, T, T + dT])
    lnz = np.zeros_like(temps)
    parts = {}
    for k in SPECIES:
        mdl = models[k]
        x = mass_inputs(temps, mdl.input_mode, mdl.t_c)
        out, tape = mdl.network.run(mdl.params, x, True, None)
        m = np.maximum(out[:, 0], 0.0)
        mdl.clamped += int(np.count_nonzero(out[:, 0] < 0))
        val, dm = _lnz_and_dm(m, temps, DOF.of(k), STATISTICS[k], rule)
        lnz += val
        parts[k] = (tape, dm * (out[:, 0] >= 0))
    n = T.size
    lo, mid, hi = lnz[:n], lnz[n : 2 * n], lnz[2 * n :]
    p_hat = mid / T**3
    e_hat = (hi - lo) / (2 * dT) / T**2
    return p_hat, e_hat, parts, dT


@dataclass
class FitResult:
    models: dict
    input_mode: str
    T: np.ndarray
    abs_err_p: np.ndarray
    abs_err_eps: np.ndarray
    trace: list = field(default_factory=list)
    clamped: int = 0

    @property
    def mae_p(self):
        return float(np.mean(self.abs_err_p))

    @property
    def mae_eps(self):
        return float(np.mean(self.abs_err_eps))

    def to_dict(self):
        return {
            "input_mode": self.input_mode,
            "T": self.T.tolist(),
            "abs_err_P_over_T4": self.abs_err_p.tolist(),
            "abs_err_eps_over_T4": self.abs_err_eps.tolist(),
            "mae_P_over_T4": self.mae_p,
            "mae_eps_over_T4": self.mae_eps,
            "clamped_outputs": self.clamped,
            "trace": self.trace,
        }


DEFAULT_FIT_CONFIG = TrainConfig(optimizer="adam", lr=1e-2, epochs=1500, batch_size=64, seed=0)


def fit_mass_models(target, input_mode="raw", train=DEFAULT_FIT_CONFIG, t_c=T_C, hidden=32, rule=None):
    """Train the three mass networks so the model EoS matches ``target``.

    The loss is the mean squared residual over both ``P/T^4`` and
    ``eps/T^4`` (equal weights) across table rows. ``train.epochs = 0``
    returns the untrained models and their errors.

    Returns
    -------
    FitResult
        Fitted models and per-row absolute errors of both columns.
    """
    if len(target) < 5:
        raise InvalidArgumentError(f"target needs at least 5 rows, got {len(target)}")
    if np.any(np.diff(target.T) <= 0):
        raise InvalidArgumentError("target T must be strictly ascending")
    rule = rule or default_rule()
    models = _init_models(input_mode, hidden, train.seed, t_c)
    opts = {k: Optimizer(train, models[k].network.n_params) for k in SPECIES}
    shuffle = Prng(train.seed).substream("qcd_shuffle")
    T_all = target.T
    Y = np.stack([target.p_over_t4, target.eps_over_t4], axis=1)
    n = T_all.size
    trace = []
    for epoch in range(train.epochs):
        order = shuffle.permutation(n)
        total = 0.0
        for start in range(0, n, train.batch_size):
            idx = order[start : start + train.batch_size]
            T = T_all[idx]
            p_hat, e_hat, parts, dT = _predict_rows(models, T, rule)
            rp, re = p_hat - Y[idx, 0], e_hat - Y[idx, 1]
            loss = float(np.mean(np.concatenate([rp, re]) ** 2))
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            total += loss * idx.size
            scale = 2.0 / (2 * idx.size)
            g_mid = scale * rp / T**3
            g_e = scale * re / (2 * dT) / T**2
            g_lnz = np.concatenate([-g_e, g_mid, g_e])
            for k in SPECIES:
                tape, dm = parts[k]
                mdl = models[k]
                grad, _ = mdl.network.backprop(mdl.params, tape, (g_lnz * dm)[:, None])
                opts[k].step(mdl.params.flat, grad)
        trace.append({"epoch": epoch + 1, "loss": total / n})
    p_hat, e_hat, _, _ = _predict_rows(models, T_all, rule)
    return FitResult(
        models=models,
        input_mode=input_mode,
        T=T_all.copy(),
        abs_err_p=np.abs(p_hat - Y[:, 0]),
        abs_err_eps=np.abs(e_hat - Y[:, 1]),
        trace=trace,
        clamped=sum(m.clamped for m in models.values()),
    )


def fit_report(target, train=DEFAULT_FIT_CONFIG, t_c=T_C, rule=None):
    """Raw and expanded fits on one target, as a JSON-ready dict."""
    out = {"t_c": t_c, "train": train.to_dict()}
    for mode in ("raw", "expanded"):
        out[mode] = fit_mass_models(target, mode, train, t_c=t_c, rule=rule).to_dict()
    return out


class QuasiParticleFitter(RegressorMixin, BaseEstimator):
    """Estimator wrapper: ``fit(T, Y)`` with ``Y[:, 0] = P/T^4`` and ``Y[:, 1] = eps/T^4``.

    ``predict(T)`` returns the model's ``(P/T^4, eps/T^4)`` columns.
    """

    def __init__(self, input_mode="raw", t_c=T_C, hidden=32, lr=1e-2, epochs=1500,
                 batch_size=64, seed=0, n_nodes=50):
        self.input_mode = input_mode
        self.t_c = t_c
        self.hidden = hidden
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.n_nodes = n_nodes

    def fit(self, T, Y):
        T = check_array(T, "T", ndim=1)
        Y = check_array(Y, "Y", ndim=2)
        order = np.argsort(T)
        target = EosTable(T[order], Y[order, 0], Y[order, 1])
        cfg = TrainConfig(optimizer="adam", lr=self.lr, epochs=self.epochs,
                          batch_size=self.batch_size, seed=self.seed)
        self.rule_ = gauss_legendre(self.n_nodes)
        self.result_ = fit_mass_models(target, self.input_mode, cfg, self.t_c, self.hidden, self.rule_)
        self.models_ = self.result_.models
        return self

    def predict(self, T):
        check_is_fitted(self, "models_")
        T = check_array(T, "T", ndim=1)
        p, e, _, _ = _predict_rows(self.models_, T, self.rule_)
        return np.stack([p, e], axis=1)

    def masses(self, T):
        check_is_fitted(self, "models_")
        return {k: self.models_[k](np.asarray(T, dtype=np.float64)) for k in SPECIES}
