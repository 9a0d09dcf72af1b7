import numpy as np
import pytest

from airynls.models import EquationParams
from airynls.multilinear import (
    HyperplaneTuple,
    LatticeBudgetError,
    MultiplierFn,
    apply_ame,
    constant_multiplier,
    delta4,
    delta4_multiplier,
    delta4_values,
    delta6,
    delta6_multiplier,
    elongate,
    hyperplane_identity_residuals,
    lambda_n,
    m2_multiplier,
    sample_gamma4_modes,
    sample_gamma6_modes,
    upsilon_n,
)
from airynls.solver import StepperConfig, integrate
from airynls.spectral import (
    MultiplierSymbol,
    SpectralField,
    first_derivative,
    i_operator,
    identity_symbol,
    make_grid,
    power_integral,
    random_field,
)

P_CERT = EquationParams(0, 1, 0, 1, 1)


def test_hyperplane_tuple_validation():
    HyperplaneTuple((1, 2, -3, 0))
    with pytest.raises(ValueError):
        HyperplaneTuple((1, 2, -2, 0))
    with pytest.raises(ValueError):
        HyperplaneTuple((1, -1, 0))


def test_upsilon_examples():
    t = HyperplaneTuple((1, 2, -3, 0))
    p_b = EquationParams(0, 1, 0, 1, 1)
    assert upsilon_n(t, p_b) == -18.0  # 1 + 8 - 27 + 0
    # factored form 3*b*xi12*xi13*xi14 = 3*3*(-2)*1
    s12, s13, s14 = 3, -2, 1
    assert upsilon_n(t, p_b) == 3 * s12 * s13 * s14
    # a-part: xi1^2 - xi2^2 + xi3^2 - xi4^2 = 2*xi12*xi14
    p_a = EquationParams(1, 0.0 + 1e-300, 0, 1, 1)
    assert np.isclose(upsilon_n(t, p_a), 2 * s12 * s14)


def test_hyperplane_identities_exact_10e6():
    rng = np.random.default_rng(123)
    k1, k2, k3, k4 = sample_gamma4_modes(rng, 1_000_000, 10_000)
    res = hyperplane_identity_residuals(k1, k2, k3, k4)
    assert res == (0, 0, 0)


@pytest.mark.parametrize("n", [2, 4, 6])
def test_calibration_against_power_integral(n):
    K = 16 if n == 6 else 32
    g = make_grid(K, 2 * np.pi)
    rng = np.random.default_rng(n)
    for _ in range(5):
        f = random_field(g, rng)
        lhs = lambda_n(constant_multiplier(n), f)
        rhs = power_integral(f, n)
        assert abs(lhs.real - rhs) <= 1e-12 * rhs
        assert abs(lhs.imag) <= 1e-12 * rhs


def test_lambda_zero_field():
    g = make_grid(16, 2 * np.pi)
    z = SpectralField.from_values(g, np.zeros(g.K))
    assert lambda_n(constant_multiplier(4), z) == 0


def test_budget_guards():
    g = make_grid(32, 2 * np.pi)
    f = random_field(g, np.random.default_rng(0))
    with pytest.raises(LatticeBudgetError):
        lambda_n(constant_multiplier(6), f)  # K=32 > 24 without allow_large
    with pytest.raises(LatticeBudgetError):
        lambda_n(constant_multiplier(8), f)
    big = make_grid(512, 2 * np.pi)
    with pytest.raises(LatticeBudgetError, match="finite-difference"):
        lambda_n(constant_multiplier(4), random_field(big, np.random.default_rng(0)))


def test_m2_values_and_kinetic_pairing():
    sym = MultiplierSymbol(N=4.0, s=0.5)
    m2 = m2_multiplier(identity_symbol())
    assert m2(2.0, -2.0) == -4.0
    # above the cutoff the symbol squares in: (4N,-4N) -> -16 N^2 * 1/4
    symN = MultiplierSymbol(N=2.0, s=0.5)
    m2n = m2_multiplier(symN)
    assert np.isclose(m2n(8.0, -8.0), -64.0 * 0.25)
    # k1 * pairing equals -k1 ||d/dx I w||^2, independent mode sum
    g = make_grid(32, 2 * np.pi)
    f = random_field(g, np.random.default_rng(1))
    val = P_CERT.k1 * lambda_n(m2_multiplier(sym), f).real
    diw = first_derivative(i_operator(f, sym))
    direct = -P_CERT.k1 * np.sum(np.abs(diw.coeffs) ** 2) * g.L / g.K**2
    assert abs(val - direct) <= 1e-12 * abs(direct)


def test_elongation_definition_and_arity():
    m2 = m2_multiplier(identity_symbol())
    x1 = elongate(m2, 1, 2)
    assert x1.arity == 4
    # X_1^2(M2)(a,b,c,d) = M2(a+b+c, d)
    assert x1(1.0, 2.0, 3.0, -6.0) == m2(6.0, -6.0)
    const = constant_multiplier(2, 3.5)
    assert elongate(const, 2, 3)(1.0, 2.0, 3.0, 4.0, -10.0) == 3.5
    with pytest.raises(ValueError):
        elongate(m2, 3, 1)
    with pytest.raises(ValueError):
        elongate(m2, 1, 0)


def test_delta4_identity_limit_is_exact_constant():
    rng = np.random.default_rng(77)
    k1, k2, k3, k4 = sample_gamma4_modes(rng, 10_000, 50)
    vals = delta4_values(k1.astype(float), k2, k3, k4, P_CERT, identity_symbol())
    target = P_CERT.e * (P_CERT.d + P_CERT.e) / 2.0
    assert np.max(np.abs(vals - target)) == 0.0


def test_delta4_resonant_tuple_matches_shrinking_perturbation():
    # independent oracle: evaluate the raw quotient at shrinking offsets
    # along the constraint-preserving direction and extrapolate
    from airynls.multilinear import _delta4_ratio

    sym = MultiplierSymbol(N=2.0, s=0.4)
    t = HyperplaneTuple((5, -5, 3, -3))  # xi12 = 0 resonance, modes above N
    val = delta4(t, P_CERT, sym)
    assert np.isfinite(val)
    x = t.xi
    ref = None
    for h in (1e-5, 1e-6):
        pair = []
        for sign in (1.0, -1.0):
            e = sign * h
            pair.append(
                _delta4_ratio(x[0] + e, x[1], x[2] - e, x[3], P_CERT, sym)
            )
        ref = 0.5 * (pair[0] + pair[1])
    assert abs(val - ref) <= 1e-4 * max(1.0, abs(ref))


def test_delta4_fully_degenerate_tuples_are_finite():
    sym = MultiplierSymbol(N=2.0, s=0.4)
    for modes in [(0, 0, 0, 0), (7, -7, 7, -7), (4, -4, -4, 4), (6, 6, -6, -6)]:
        val = delta4(HyperplaneTuple(modes), P_CERT, sym)
        assert np.isfinite(val)


def test_delta4_general_coefficients_need_opt_in():
    sym = identity_symbol()
    p = EquationParams(1.0, 1.0, 0.5, 1.0, 1.0)
    with pytest.raises(ValueError, match="experimental"):
        delta4_values(1.0, 2.0, -3.0, 0.0, p, sym)
    val = delta4_values(1.0, 2.0, -3.0, 0.0, p, sym, experimental=True)
    assert np.isfinite(val)


def test_delta4_sampled_bound_is_stable_under_range_doubling():
    sym = MultiplierSymbol(N=8.0, s=0.3)
    from airynls.spectral import m_symbol

    rng = np.random.default_rng(2)
    sups = []
    for R in (64, 128):
        k1, k2, k3, k4 = sample_gamma4_modes(rng, 1_000_000, R)
        vals = delta4_values(k1.astype(float), k2, k3, k4, P_CERT, sym)
        ns = np.maximum.reduce([np.abs(k) for k in (k1, k2, k3, k4)]).astype(float)
        ratio = np.abs(vals) / m_symbol(ns, sym) ** 2
        sups.append(float(np.max(ratio)))
    assert np.isfinite(sups[0]) and np.isfinite(sups[1])
    assert sups[1] <= 2.0 * sups[0]


def test_lambda_reality_for_conjugation_symmetric_multipliers():
    g = make_grid(32, 2 * np.pi)
    f = random_field(g, np.random.default_rng(3))
    sym = MultiplierSymbol(N=3.0, s=0.4)
    for M in (m2_multiplier(sym), delta4_multiplier(P_CERT, sym)):
        val = lambda_n(M, f)
        assert abs(val.imag) <= 1e-12 * max(1.0, abs(val.real))


def test_lambda_invariant_under_slot_permutations():
    # an asymmetric multiplier and its odd/even slot relabelings induce the
    # same functional
    g = make_grid(24, 2 * np.pi)
    f = random_field(g, np.random.default_rng(4))

    def asym(x1, x2, x3, x4):
        return x1 * x1 * x2 + 0.3 * x3

    base = lambda_n(MultiplierFn(4, asym), f)
    swapped_odd = lambda_n(MultiplierFn(4, lambda a, b, c, d: asym(c, b, a, d)), f)
    swapped_even = lambda_n(MultiplierFn(4, lambda a, b, c, d: asym(a, d, c, b)), f)
    assert abs(base - swapped_odd) <= 1e-12 * max(1.0, abs(base))
    assert abs(base - swapped_even) <= 1e-12 * max(1.0, abs(base))


def test_apply_ame_boundary_vanishes_on_pair_lattice():
    # the quadratic boundary symbol is zero on the two-slot hyperplane
    sym = MultiplierSymbol(N=3.0, s=0.4)
    dec = apply_ame(m2_multiplier(sym), EquationParams(0.7, 1.2, 0.1, 0.5, 0.3))
    xi = np.linspace(-10, 10, 41)
    vals = dec.boundary(xi, -xi)
    assert np.max(np.abs(vals)) < 1e-12


def test_apply_ame_four_linear_cancellation():
    # the quartic correction is chosen so that, after slot symmetrization,
    # it cancels the quartic extensions of the kinetic pairing
    sym = MultiplierSymbol(N=2.0, s=0.4)
    k1 = P_CERT.k1
    m2k = k1 * m2_multiplier(sym)
    dec = apply_ame(m2k, P_CERT)
    ext = dec.extensions[0] + dec.extensions[1]
    d4 = delta4_multiplier(P_CERT, sym)

    rng = np.random.default_rng(6)
    a1, a2, a3, a4 = sample_gamma4_modes(rng, 500, 12)
    x = [v.astype(float) for v in (a1, a2, a3, a4)]

    def symmetrized(fn, x1, x2, x3, x4):
        total = 0.0
        for xo in ((x1, x3), (x3, x1)):
            for xe in ((x2, x4), (x4, x2)):
                total = total + fn(xo[0], xe[0], xo[1], xe[1])
        return total / 4.0

    from airynls.multilinear import upsilon_values

    def correction_term(x1, x2, x3, x4):
        return 1j * d4(x1, x2, x3, x4) * upsilon_values((x1, x2, x3, x4), P_CERT)

    combined = symmetrized(lambda *xs: ext(*xs) + correction_term(*xs), *x)
    scale = np.max(np.abs(symmetrized(correction_term, *x))) + 1e-30
    assert np.max(np.abs(combined)) <= 1e-10 * scale


def test_apply_ame_rate_matches_finite_difference():
    g = make_grid(32, 2 * np.pi)
    w0 = random_field(g, np.random.default_rng(7), amplitude=1.2, decay=1.6)
    p = EquationParams(0.0, 1.0, 0.0, 0.8, 1.0)
    sym = MultiplierSymbol(N=3.0, s=0.4)
    tr = integrate(w0, p, StepperConfig(dt=1e-6, final_time=8e-6, sample_every=2))
    m2 = m2_multiplier(sym)
    vals = [lambda_n(m2, f).real for f in tr.fields]
    h = tr.times[1] - tr.times[0]
    fd = (vals[0] - 8 * vals[1] + 8 * vals[3] - vals[4]) / (12 * h)
    dec = apply_ame(m2, p)
    mid = tr.fields[2]
    gen = lambda_n(dec.boundary, mid) + lambda_n(dec.extension_sum(), mid)
    assert abs(fd - gen.real) <= 1e-4 * abs(gen.real)


def test_apply_ame_linear_flow_keeps_constants_constant():
    # c = d = e = 0: only the dispersive boundary term remains, and for a
    # constant multiplier it integrates to zero mode by mode
    g = make_grid(16, 2 * np.pi)
    f = random_field(g, np.random.default_rng(9))
    p_lin = EquationParams(0.5, 1.0, 0, 0, 0)
    dec = apply_ame(constant_multiplier(2), p_lin)
    for M in dec.extensions:
        assert abs(lambda_n(M, f)) == 0.0


def test_delta6_printed_equals_generated_functional():
    g = make_grid(16, 2 * np.pi)
    f = random_field(g, np.random.default_rng(10))
    sym = MultiplierSymbol(N=2.0, s=0.45)
    printed = lambda_n(delta6_multiplier(P_CERT, sym, route="printed"), f)
    generated = lambda_n(delta6_multiplier(P_CERT, sym, route="generated"), f)
    assert abs(printed - generated) <= 1e-10 * max(1.0, abs(generated))


def test_delta6_identity_limit_vanishes():
    # constant quartic correction makes the printed sextic multiplier vanish
    # pointwise, and the generated functional vanish after symmetrization
    t = HyperplaneTuple((3, -1, -4, 2, 5, -5))
    assert delta6(t, P_CERT, identity_symbol(), route="printed") == 0j
    g = make_grid(16, 2 * np.pi)
    f = random_field(g, np.random.default_rng(11), amplitude=1.3)
    gen = delta6_multiplier(P_CERT, identity_symbol(), route="generated")
    val = lambda_n(gen, f)
    scale = power_integral(f, 2) ** 3
    assert abs(val) <= 1e-12 * max(1.0, scale)


def test_delta6_bound_sampling_stable():
    sym = MultiplierSymbol(N=8.0, s=0.3)
    from airynls.spectral import m_symbol

    printed = delta6_multiplier(P_CERT, sym, route="printed")
    rng = np.random.default_rng(12)
    sups = []
    for R in (32, 64):
        ks = sample_gamma6_modes(rng, 20_000, R)
        xs = [k.astype(float) for k in ks]
        vals = printed(*xs)
        ns = np.maximum.reduce([np.abs(k) for k in ks]).astype(float)
        ratio = np.abs(vals) / (ns * m_symbol(ns, sym) ** 2 + 1e-300)
        sups.append(float(np.max(ratio)))
    assert np.isfinite(sups[0]) and np.isfinite(sups[1])
    assert sups[1] <= 2.0 * sups[0]


def test_lambda_workers_bitwise_deterministic():
    g = make_grid(64, 2 * np.pi)
    f = random_field(g, np.random.default_rng(13))
    sym = MultiplierSymbol(N=3.0, s=0.4)
    M = delta4_multiplier(P_CERT, sym)
    v1 = lambda_n(M, f, workers=1)
    v4 = lambda_n(M, f, workers=4)
    assert v1 == v4
