import random

import pytest

from conftest import random_point, random_table
from oracles import check_aggregation_equivalence, flat, matmul_ints, rand_matrix, zero_form_accepts
from zkdl.aggregate import (OpSpec, ReindexClaim, hadamard_spec, matmul_spec,
                            prove_aggregated_from_claim, prove_hadamard_batched, prove_matmul_batched,
                            prove_reindex, selector_weights, verify_aggregated_from_claim,
                            verify_hadamard_batched, verify_matmul_batched, verify_reindex)
from zkdl.field import P
from zkdl.sumcheck import (RoundPolynomial, SumcheckProof, evals_to_coeffs, evaluate, prove_product,
                           prove_sumcheck, verify_rounds, verify_sumcheck)
from zkdl.tensor import beta_eval, index_bits, mle_eval
from zkdl.transcript import Transcript
from zkdl.wire import MalformedProof, SumcheckReject, VerificationError


def _plain_accepts(table, claim, proof) -> bool:
    nvars = len(table).bit_length() - 1
    try:
        point, value = verify_sumcheck(claim, proof, nvars, Transcript("sc"))
    except SumcheckReject:
        return False
    return value == mle_eval(table, point)


def test_zero_polynomial_claim_zero_accepts():
    t = [0] * 8
    assert _plain_accepts(t, 0, prove_sumcheck(t, 0, Transcript("sc")))


def test_small_table_sum_matches_brute_force():
    t = [1, 2, 3, 4]
    assert sum(t) == 10
    pf = prove_sumcheck(t, 10, Transcript("sc"))
    assert _plain_accepts(t, 10, pf)
    assert len(pf.rounds) == 2 and pf.n_field_elements == 3


def test_claim_off_by_one_rejected_in_1000_trials():
    rng = random.Random(11)
    rejected = 0
    for _ in range(1000):
        t = random_table(rng, 3)
        wrong = (sum(t) + 1) % P
        rejected += not _plain_accepts(t, wrong, prove_sumcheck(t, wrong, Transcript("sc")))
    assert rejected == 1000


def test_each_single_coefficient_mutation_rejects():
    rng = random.Random(12)
    tables = [random_table(rng, 3) for _ in range(2)]
    claim = sum(a * b for a, b in zip(*tables)) % P
    rounds, _, finals = prove_product(tables, [(1, [0, 1])], [2, 2, 2], Transcript("p"))

    def accepts(rs) -> bool:
        try:
            point, final = verify_rounds(rs, claim, [2, 2, 2], Transcript("p"))
        except SumcheckReject:
            return False
        return final == mle_eval(tables[0], point) * mle_eval(tables[1], point) % P

    assert accepts(rounds)
    for r in range(len(rounds)):
        for c in range(len(rounds[r].sent)):
            mutated = [RoundPolynomial(rp.degree, list(rp.sent)) for rp in rounds]
            mutated[r].sent[c] = (mutated[r].sent[c] + 1) % P
            assert not accepts(mutated)


def test_truncated_and_wrong_degree_proofs():
    t = [5, 1, 4, 2, 8, 8, 0, 3]
    data = prove_sumcheck(t, sum(t), Transcript("sc")).to_bytes()
    assert SumcheckProof.from_bytes(data).to_bytes() == data
    with pytest.raises(MalformedProof):
        SumcheckProof.from_bytes(data[:-1])
    pf = SumcheckProof.from_bytes(data)
    pf.rounds.pop()
    assert not _plain_accepts(t, sum(t), pf)
    with pytest.raises(SumcheckReject):
        verify_sumcheck(sum(t), pf, 3, Transcript("sc"), degree=2)


def test_interpolation_recovers_coefficients():
    coeffs = [3, P - 1, 7, 11]
    evals = [evaluate(coeffs, x) for x in range(4)]
    assert evals_to_coeffs(evals) == coeffs


def test_round_polynomial_restores_linear_coefficient():
    rp = RoundPolynomial.from_coeffs([4, 9, 2])
    assert rp.sent == [4, 2]
    claim = (evaluate([4, 9, 2], 0) + evaluate([4, 9, 2], 1)) % P
    assert rp.coeffs(claim) == [4, 9, 2]


# aggregated matrix products ---------------------------------------------

def test_direct_2x2_product_zero_form():
    a, b = [[1, 2], [3, 4]], [[5, 6], [7, 8]]
    y = [[19, 22], [43, 50]]
    assert matmul_ints(a, b) == y
    assert zero_form_accepts((1, 1, 1), flat(a), flat(b), flat(y), "t")
    y[1][1] = 51
    assert not zero_form_accepts((1, 1, 1), flat(a), flat(b), flat(y), "t")


def test_two_instance_product_and_single_corruption():
    rng = random.Random(13)
    a_s = [rand_matrix(rng, 2, 2) for _ in range(2)]
    b_s = [rand_matrix(rng, 2, 2) for _ in range(2)]
    ys = [matmul_ints(a, b) for a, b in zip(a_s, b_s)]
    stack = lambda ms: sum(map(flat, ms), [])
    assert zero_form_accepts((1, 1, 1), stack(a_s), stack(b_s), stack(ys), "t")
    for _ in range(20):
        bad = [list(map(list, y)) for y in ys]
        bad[rng.randrange(2)][rng.randrange(2)][rng.randrange(2)] += 1
        assert not zero_form_accepts((1, 1, 1), stack(a_s), stack(b_s), stack(bad), "t")


def _claim_case(rng, n, dims, trans_a=False, trans_b=False):
    rows, inner, cols = (1 << d for d in dims)
    a_s = [rand_matrix(rng, rows, inner) for _ in range(n)]
    b_s = [rand_matrix(rng, inner, cols) for _ in range(n)]
    y = sum((flat(matmul_ints(a, b)) for a, b in zip(a_s, b_s)), [])
    t = lambda m: [list(r) for r in zip(*m)]
    a_tab = sum((flat(t(a) if trans_a else a) for a in a_s), [])
    b_tab = sum((flat(t(b) if trans_b else b) for b in b_s), [])
    return a_tab, b_tab, y


@pytest.mark.parametrize("trans_a,trans_b", [(False, False), (True, False), (False, True)])
def test_claim_form_matmul_rounds_and_terminal_claims(trans_a, trans_b):
    rng = random.Random(14)
    dims = (2, 2, 2)
    a_tab, b_tab, y = _claim_case(rng, 4, dims, trans_a, trans_b)
    spec = matmul_spec(*dims, trans_a=trans_a, trans_b=trans_b)
    w, u = random_point(rng, 2), random_point(rng, 4)
    value = mle_eval(y, w + u)
    pf, claims = prove_aggregated_from_claim(spec, [a_tab, b_tab], w, u, value, Transcript("c"))
    assert len(pf.rounds) == 2 + 2     # log2 N + log2 D_in
    got = verify_aggregated_from_claim(spec, 2, w, u, value, pf, Transcript("c"))
    for c, tab in zip(got, (a_tab, b_tab)):
        assert mle_eval(tab, c.point) == c.value
    with pytest.raises(SumcheckReject):
        verify_aggregated_from_claim(spec, 2, w, u, (value + 1) % P, pf, Transcript("c"))


def test_matmul_and_hadamard_wrappers():
    rng = random.Random(15)
    a_tab, b_tab, y = _claim_case(rng, 4, (2, 2, 2))
    w, u = random_point(rng, 2), random_point(rng, 4)
    v = mle_eval(y, w + u)
    pf, _ = prove_matmul_batched(a_tab, b_tab, w, u, v, Transcript("m"), (2, 2, 2))
    assert len(pf.rounds) == 4
    verify_matmul_batched(2, w, u, v, pf, Transcript("m"), (2, 2, 2))

    t = random_table(rng, 3)
    ones = [1] * 8
    u = random_point(rng, 3)
    v = mle_eval(t, u)
    pf, _ = prove_hadamard_batched(ones, t, [], u, v, Transcript("h"), 3)
    verify_hadamard_batched(0, [], u, v, pf, Transcript("h"), 3)
    bad = list(t)
    bad[2] = (bad[2] + 1) % P
    pf, _ = prove_hadamard_batched(ones, bad, [], u, v, Transcript("h"), 3)
    with pytest.raises(SumcheckReject):
        verify_hadamard_batched(0, [], u, v, pf, Transcript("h"), 3)


def test_identity_op_reduces_to_reevaluation():
    rng = random.Random(16)
    spec = OpSpec(3, 0, ((("i", 0), ("i", 1), ("i", 2)),), ((1, (0,)),), "identity")
    t = random_table(rng, 3)
    u = random_point(rng, 3)
    v = mle_eval(t, u)
    pf, claims = prove_aggregated_from_claim(spec, [t], [], u, v, Transcript("id"))
    assert pf.rounds == []
    got = verify_aggregated_from_claim(spec, 0, [], u, v, pf, Transcript("id"))
    assert got[0].point == u and got[0].value == v


def test_backward_chain_discharges_to_parameter_claims():
    """G_A = G_Z W^T then G_W = G_Z^T A, both proven from claims, checked on the tables."""
    rng = random.Random(17)
    gz, w, a = rand_matrix(rng, 4, 4), rand_matrix(rng, 4, 4), rand_matrix(rng, 4, 4)
    ga = matmul_ints(gz, [list(r) for r in zip(*w)])
    gw = matmul_ints([list(r) for r in zip(*gz)], a)
    u1 = random_point(rng, 4)
    sp1 = matmul_spec(2, 2, 2, trans_b=True)
    v1 = mle_eval(flat(ga), u1)
    pf1, _ = prove_aggregated_from_claim(sp1, [flat(gz), flat(w)], [], u1, v1, Transcript("a"))
    c_gz, c_w = verify_aggregated_from_claim(sp1, 0, [], u1, v1, pf1, Transcript("a"))
    assert mle_eval(flat(w), c_w.point) == c_w.value
    sp2 = matmul_spec(2, 2, 2, trans_a=True)
    u2 = random_point(rng, 4)
    v2 = mle_eval(flat(gw), u2)
    pf2, _ = prove_aggregated_from_claim(sp2, [flat(gz), flat(a)], [], u2, v2, Transcript("b"))
    c_gz2, c_a = verify_aggregated_from_claim(sp2, 0, [], u2, v2, pf2, Transcript("b"))
    assert mle_eval(flat(gz), c_gz.point) == c_gz.value
    assert mle_eval(flat(gz), c_gz2.point) == c_gz2.value
    assert mle_eval(flat(a), c_a.point) == c_a.value
    with pytest.raises(SumcheckReject):
        verify_aggregated_from_claim(sp2, 0, [], u2, (v2 + 5) % P, pf2, Transcript("b"))


def test_aggregation_equivalence_small_shapes():
    rng = random.Random(18)
    for case in [(1, 2, 2, 2), (2, 1, 4, 2), (4, 2, 1, 4)]:
        assert check_aggregation_equivalence(*case, rng) == case[0] + 1


# re-indexing ------------------------------------------------------------

def test_identity_selector_passes_claim_through():
    rng = random.Random(19)
    x = random_table(rng, 4)
    u0, u = random_point(rng, 1), random_point(rng, 3)
    claim = ReindexClaim(selector_weights([0, 1], u0, 2), u, mle_eval(x, u0 + u))
    pf, ec = prove_reindex(x, 1, [claim], Transcript("r"))
    got = verify_reindex(1, 3, [claim], pf, Transcript("r"))
    assert got.value == mle_eval(x, got.point) == ec.value
    assert got.point[1:] == u


def test_selector_weight_for_single_subslice():
    u0 = [12345]
    assert selector_weights([1, None], u0, 2) == [0, beta_eval(u0, [0])]


def test_reindex_with_distinct_inner_points_and_tamper():
    rng = random.Random(20)
    x = random_table(rng, 5)                    # 4 slots of 8
    claims = []
    for sel in ([3, 1], [0, 2, 1, None]):
        sp = random_point(rng, (len(sel) - 1).bit_length())
        u = random_point(rng, 3)
        sub = []
        for s in sel:
            sub += x[s * 8:(s + 1) * 8] if s is not None else [0] * 8
        claims.append(ReindexClaim(selector_weights(sel, sp, 4), u, mle_eval(sub, sp + u)))
    pf, ec = prove_reindex(x, 2, claims, Transcript("r"))
    got = verify_reindex(2, 3, claims, pf, Transcript("r"))
    assert got.value == mle_eval(x, got.point)
    claims[1].value = (claims[1].value + 1) % P
    with pytest.raises(SumcheckReject):
        verify_reindex(2, 3, claims, pf, Transcript("r"))


def test_reindex_shape_errors():
    with pytest.raises(ValueError):
        prove_reindex([0] * 8, 1, [], Transcript("r"))
    with pytest.raises(SumcheckReject):
        verify_reindex(1, 2, [ReindexClaim([1], [0, 0], 0)],
                       SumcheckProof([], [0]), Transcript("r"))
