"""Algebraic invariants checked on generated inputs."""
import random

from hypothesis import given, settings, strategies as st

from zkdl.aggregate import ReindexClaim, prove_reindex, selector_weights, verify_reindex
from zkdl.field import P, QuantParams, round_rescale
from zkdl.sumcheck import SumcheckProof, prove_sumcheck, verify_sumcheck
from zkdl.tensor import (DenseTensor, beta_eval, beta_table, fix_variables, fold_first_var,
                         index_bits, mle_eval, stack)
from zkdl.transcript import Transcript
from zkdl.wire import Reader, Writer
from zkdl.zkrelu import (GadgetClaim, ReluClaims, build_aux, decompose, prove_zkrelu_sumcheck,
                         relu_backward, relu_forward, remainder_weights, round_weights,
                         value_weights, verify_zkrelu_sumcheck)

fe = st.integers(min_value=0, max_value=P - 1)
settings.register_profile("zkdl", deadline=None, max_examples=60)
settings.load_profile("zkdl")


@st.composite
def table_and_point(draw, max_vars=6):
    n = draw(st.integers(min_value=1, max_value=max_vars))
    table = draw(st.lists(fe, min_size=1 << n, max_size=1 << n))
    point = draw(st.lists(fe, min_size=n, max_size=n))
    return table, point


@given(table_and_point())
def test_mle_agrees_with_table_on_hypercube(tp):
    table, _ = tp
    n = len(table).bit_length() - 1
    for x in range(len(table)):
        assert mle_eval(table, index_bits(x, n)) == table[x]


@given(table_and_point())
def test_fold_then_eval_equals_eval(tp):
    table, point = tp
    assert mle_eval(fold_first_var(table, point[0]), point[1:]) == mle_eval(table, point)


@given(table_and_point())
def test_mle_is_beta_weighted_sum(tp):
    table, point = tp
    bt = beta_table(point)
    assert sum(a * b for a, b in zip(table, bt)) % P == mle_eval(table, point)


@given(table_and_point(), table_and_point(), fe)
def test_mle_is_linear_in_the_table(tp1, tp2, c):
    t1, pt = tp1
    t2 = (tp2[0] * len(t1))[:len(t1)]
    comb = [(a + c * b) % P for a, b in zip(t1, t2)]
    assert mle_eval(comb, pt) == (mle_eval(t1, pt) + c * mle_eval(t2, pt)) % P


@given(st.lists(fe, min_size=1, max_size=6), st.lists(fe, min_size=1, max_size=6))
def test_beta_symmetric_and_table_sums_to_one(a, b):
    b = (b * len(a))[:len(a)]
    assert beta_eval(a, b) == beta_eval(b, a)
    assert sum(beta_table(a)) % P == 1


@given(table_and_point(max_vars=5), st.data())
def test_fix_variables_commutes_with_eval(tp, data):
    table, point = tp
    n = len(point)
    pos = data.draw(st.sets(st.integers(0, n - 1)))
    part = fix_variables(table, n, {p: point[p] for p in pos})
    rest = [point[i] for i in range(n) if i not in pos]
    assert mle_eval(part, rest) == mle_eval(table, point)


@given(st.integers(1, 5), st.integers(1, 3), st.randoms(use_true_random=False))
def test_stacked_mle_splits_into_slices(count, nvars, rnd):
    parts = [DenseTensor([rnd.randrange(P) for _ in range(1 << nvars)], (1 << nvars,))
             for _ in range(count)]
    s = stack(parts)
    u = [rnd.randrange(P) for _ in range(nvars)]
    for k in range(s.shape[0]):
        want = parts[k].mle(u) if k < count else 0
        assert s.mle(index_bits(k, s.stack_vars) + u) == want


@given(table_and_point())
def test_sumcheck_complete_and_serializable(tp):
    table, _ = tp
    n = len(table).bit_length() - 1
    claim = sum(table) % P
    pf = SumcheckProof.from_bytes(prove_sumcheck(table, claim, Transcript("p")).to_bytes())
    point, value = verify_sumcheck(claim, pf, n, Transcript("p"))
    assert value == mle_eval(table, point)


@given(st.integers(2, 3), st.integers(1, 3), st.randoms(use_true_random=False))
def test_reindex_on_random_permutation(stack_vars, inner, rnd):
    slots = 1 << stack_vars
    x = [rnd.randrange(P) for _ in range(slots << inner)]
    perm = list(range(slots))
    rnd.shuffle(perm)
    sp = [rnd.randrange(P) for _ in range(stack_vars)]
    u = [rnd.randrange(P) for _ in range(inner)]
    permuted = [v for s in perm for v in x[s << inner:(s + 1) << inner]]
    value = mle_eval(permuted, sp + u)
    claim = ReindexClaim(selector_weights(perm, sp, slots), u, value)
    assert sum(w * mle_eval(x, index_bits(i, stack_vars) + u)
               for i, w in enumerate(claim.weights)) % P == value
    pf, _ = prove_reindex(x, stack_vars, [claim], Transcript("rx"))
    ec = verify_reindex(stack_vars, inner, [claim], pf, Transcript("rx"))
    assert ec.value == mle_eval(x, ec.point)


@given(st.integers(2, 40), st.data())
def test_bit_weights_recover_value_rounding_and_remainder(width, data):
    v = data.draw(st.integers(-(1 << (width - 1)), (1 << (width - 1)) - 1))
    shift = data.draw(st.integers(1, width - 1))
    bits = decompose(v, width)
    assert all(b in (0, 1) for b in bits)
    dot = lambda w: sum(b * x for b, x in zip(bits, w)) % P
    q, rem = round_rescale(v, shift)
    assert dot(value_weights(width)) == v % P
    assert dot(round_weights(width, shift)) == q % P
    assert dot(remainder_weights(shift, width)) == rem % P


@given(st.lists(st.tuples(st.integers(-32, 31), st.integers(-32, 31)), min_size=1, max_size=8),
       st.randoms(use_true_random=False))
def test_zkrelu_complete_on_random_inputs(pairs, rnd):
    qp = QuantParams(4, 2)
    z = [p[0] for p in pairs]
    ga = [p[1] for p in pairs]
    aux = build_aux(z, ga, qp)
    n = len(aux.bits[0])
    ev = n.bit_length() - 1
    pad = lambda xs: [v % P for v in xs] + [0] * (n - len(xs))

    def claim(vals):
        u = [rnd.randrange(P) for _ in range(ev)]
        return GadgetClaim(u, mle_eval(pad(vals), u))

    a = [relu_forward(v, 2) for v in z]
    gz = [relu_backward(v, g, 2) for v, g in zip(z, ga)]
    cl = ReluClaims(claim(z), claim(a), claim(ga), claim(gz))
    pf, ec = prove_zkrelu_sumcheck(aux.table, cl, qp, Transcript("r"), ev)
    got = verify_zkrelu_sumcheck(cl, pf, qp, Transcript("r"), ev)
    assert got.value == mle_eval(aux.table, got.point) == ec.value


@given(st.lists(st.integers(0, (1 << 32) - 1), max_size=5), st.lists(fe, max_size=5),
       st.binary(max_size=40))
def test_wire_round_trip(ints, fes, raw):
    w = Writer()
    for v in ints:
        w.u32(v)
    w.fes(fes)
    w.blob(raw)
    r = Reader(w.getvalue())
    assert [r.u32() for _ in ints] == ints
    assert r.fes() == fes
    assert r.blob() == raw
    r.done()
