import pytest
from hypothesis import given, strategies as st

from zkdl import field
from zkdl.field import (P, FieldElement, FieldError, QuantOverflow, QuantParams, batch_inv,
                        dequantize, embed, from_bytes, inv, lift, quantize, round_rescale,
                        round_shift, to_bytes)

small = st.integers(min_value=-(1 << 31), max_value=(1 << 31) - 1)
fe = st.integers(min_value=0, max_value=P - 1)


def test_modulus_is_ristretto_group_order():
    assert P == 2**252 + 27742317777372353535851937790883648493
    assert pow(3, P - 1, P) == 1


def test_embed_examples():
    assert embed(0) == 0
    assert embed(-1) == P - 1
    assert lift(field.mul(embed(3), embed(-2))) == -6


def test_embed_rejects_out_of_range():
    with pytest.raises(QuantOverflow):
        embed(1 << 32, width=32)
    assert embed((1 << 32) - 1, width=32) == (1 << 32) - 1


def test_quantize_examples():
    assert quantize(0.5, 16) == 32768
    assert quantize(1.0, 16) == 65536
    assert quantize(-0.75, 2) == -3


def test_quantize_half_up_ties():
    assert quantize(0.125, 2) == 1     # 0.5 rounds up
    assert quantize(-0.125, 2) == 0    # -0.5 rounds up too


def test_quantize_overflow_and_nan():
    with pytest.raises(QuantOverflow):
        quantize(1.0, 16, width=16)
    with pytest.raises(QuantOverflow):
        quantize(float("nan"), 16)
    assert dequantize(quantize(0.25, 16), 16) == 0.25


def test_round_rescale_examples():
    assert round_rescale(2**16 * 3 + 5, 16) == (3, 5)
    assert round_rescale(-1, 2) == (0, -1)
    assert round_rescale(6, 2) == (2, -2)
    assert round_shift(7, 0) == 7


def test_inverse_and_batch_inverse():
    xs = [1, 2, 3, P - 1, 12345678901234567890]
    for x, y in zip(xs, batch_inv(xs)):
        assert x * y % P == 1
        assert inv(x) == y
    with pytest.raises(ZeroDivisionError):
        inv(0)
    with pytest.raises(ZeroDivisionError):
        batch_inv([1, 0])


def test_bytes_round_trip_and_canonical_check():
    assert from_bytes(to_bytes(P - 1)) == P - 1
    with pytest.raises(FieldError):
        from_bytes(P.to_bytes(32, "little"))
    with pytest.raises(FieldError):
        from_bytes(b"\x00" * 31)


def test_field_element_operators():
    a, b = FieldElement(5), FieldElement(-3)
    assert a + b == 2
    assert a - b == 8
    assert 1 - a == P - 4
    assert a * b == P - 15
    assert (a / b) * b == a
    assert -a == P - 5
    assert FieldElement.from_bytes(a.to_bytes()) == a


def test_quant_params_bounds():
    qp = QuantParams(4, 2)
    assert qp.width == 6 and qp.bound == 32
    assert qp.check(-32) == -32
    with pytest.raises(QuantOverflow):
        qp.check(32)
    with pytest.raises(ValueError):
        QuantParams(40, 30)


@given(small, small)
def test_embed_is_a_ring_homomorphism_on_small_values(a, b):
    assert lift(field.add(embed(a), embed(b))) == a + b
    assert lift(field.mul(embed(a), embed(b))) == a * b
    assert lift(embed(a)) == a


@given(st.integers(min_value=-(1 << 40), max_value=1 << 40), st.integers(min_value=1, max_value=30))
def test_round_rescale_reconstructs_and_bounds_remainder(v, r):
    q, rem = round_rescale(v, r)
    assert v == (q << r) + rem
    assert -(1 << (r - 1)) <= rem < (1 << (r - 1))


@given(fe, fe, fe)
def test_field_axioms(a, b, c):
    assert field.mul(a, field.add(b, c)) == field.add(field.mul(a, b), field.mul(a, c))
    assert field.add(a, field.neg(a)) == 0
    assert field.sub(a, b) == field.add(a, field.neg(b))
    if a:
        assert field.mul(a, inv(a)) == 1
