import json
from fractions import Fraction

import pytest

from covercheck.certificates import (Certificate, certificate_from_dict, construct_edf, decompose_flow,
                                     validate_certificate)
from covercheck.errors import CovercheckError, InvalidStateError
from covercheck.feasibility import BallCover, check_arrangement, check_connected, check_sandwich
from covercheck.flow import build_cover_network, max_flow
from covercheck.rng import SplitMix64
from covercheck.spaces import CircleSpace, CubeSpace, LineSpace, triangle_graph


def _edf(centers, r):
    return construct_edf(BallCover(LineSpace(), centers, r))


@pytest.mark.parametrize("centers,r", [([0.25, 0.75], 0.25), ([0.2, 0.6], 0.4)])
def test_edf_splits_at_half(centers, r):
    cert = _edf(centers, r)
    # mu_1 = 2 on [0, 1/2], mu_2 = 2 on [1/2, 1]
    spans = {b: [] for b in range(2)}
    for g, b, m in cert.alloc:
        for k in cert.groups[g]:
            spans[b].append(cert.pieces[k][1:])
    assert spans[0] == [(0.0, pytest.approx(0.5))]
    assert spans[1] == [(pytest.approx(0.5), 1.0)]
    assert validate_certificate(cert).ok


def test_edf_on_nonuniform_density():
    space = LineSpace("interval", (0, 0.5, 1), (1.5, 0.5))
    for k in range(30):
        rng = SplitMix64.keyed(51, k)
        cover = BallCover(space, space.sample(rng, 1 + rng.integers(40)), 0.05 + 0.3 * rng.random())
        if check_connected(cover, certificate=False).is_disintegrable:
            assert validate_certificate(construct_edf(cover)).ok
        else:
            with pytest.raises(CovercheckError):
                construct_edf(cover)


def test_edf_rejects_infeasible_and_wrong_space():
    with pytest.raises(CovercheckError):
        _edf([0.1, 0.2], 0.25)
    with pytest.raises(ValueError):
        construct_edf(BallCover(CircleSpace(), [0.5], 0.5))


def test_edf_and_flow_both_validate():
    for k in range(20):
        rng = SplitMix64.keyed(52, k)
        cover = BallCover(LineSpace(), LineSpace().sample(rng, 20), 0.15)
        out = check_arrangement(cover)
        if out.is_disintegrable:
            assert validate_certificate(out.certificate).ok
            assert validate_certificate(construct_edf(cover)).ok


def test_perfect_matching_decomposition():
    cn = build_cover_network([Fraction(1, 2), Fraction(1, 2)], [[0], [1]], 2)
    max_flow(cn)
    pieces = [(0, Fraction(0), Fraction(1, 2)), (0, Fraction(1, 2), Fraction(1))]
    cert = decompose_flow(cn, pieces, [[0], [1]], [0.25, 0.75], 0.25, LineSpace())
    assert sorted(cert.alloc) == [(0, 0, 1), (1, 1, 1)]
    assert validate_certificate(cert).ok


def test_unsaturated_flow_cannot_be_decomposed():
    cn = build_cover_network([Fraction(1, 2), Fraction(1, 2)], [[0, 1], []], 2)
    max_flow(cn)
    with pytest.raises(InvalidStateError):
        decompose_flow(cn, [(0, 0, 0.5), (0, 0.5, 1)], [[0], [1]], [0.1, 0.2], 0.25, LineSpace())


def test_mutations_are_flagged():
    cert = _edf([0.25, 0.75], 0.25)
    scaled = Certificate(cert.space, cert.centers, cert.r, cert.pieces, cert.groups,
                         [(g, b, m * 0.99) for g, b, m in cert.alloc], cert.method)
    rep = validate_certificate(scaled)
    assert not rep.ok and "mass_deficit" in rep.flags
    moved = Certificate(cert.space, cert.centers, cert.r, cert.pieces, cert.groups,
                        [(1, 0, 1.0), (0, 1, 1.0)], cert.method)
    rep = validate_certificate(moved)
    assert not rep.ok and "support_violation" in rep.flags
    overlap = Certificate(cert.space, cert.centers, cert.r, [(0, 0.0, 0.6), (0, 0.4, 1.0)], cert.groups,
                          cert.alloc, cert.method)
    assert "partition_error" in validate_certificate(overlap).flags
    skewed = Certificate(cert.space, cert.centers, 0.75, cert.pieces, cert.groups,
                         [(0, 0, 0.5), (1, 0, 0.5), (0, 1, 0.5), (1, 1, 0.5)], cert.method)
    assert validate_certificate(skewed).ok
    lopsided = Certificate(cert.space, cert.centers, 0.75, cert.pieces, cert.groups,
                           [(0, 0, 1.0), (0, 1, 1.0)], cert.method)
    assert "average_mismatch" in validate_certificate(lopsided).flags


def test_cube_inner_certificate_lies_in_linf_balls():
    cube = CubeSpace(2, "linf")
    cover = BallCover(cube, cube.sample(SplitMix64.keyed(53), 6), 0.45)
    out = check_sandwich(cover)
    assert out.is_disintegrable
    rep = validate_certificate(out.certificate)
    assert rep.ok and rep.support_violation == 0


@pytest.mark.parametrize("space", [LineSpace(), CircleSpace(), triangle_graph(), CubeSpace(2, "linf")])
def test_json_roundtrip(space):
    rng = SplitMix64.keyed(54, len(space.kind))
    x = space.sample(rng, 3)
    out = check_arrangement(BallCover(space, x, 1.0 if space.kind == "cube_linf" else 0.6))
    assert out.is_disintegrable
    cert = out.certificate
    back = certificate_from_dict(json.loads(cert.to_json()))
    assert back.to_dict() == cert.to_dict()
    assert back.digest() == cert.digest()
    assert validate_certificate(back).ok
