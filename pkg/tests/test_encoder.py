import numpy as np
import pytest

from iriscap.encoder import (
    KERNEL_SHAPES,
    GaborParams,
    NormalizedTexture,
    build_filter_bank,
    encode,
    filter_response,
    gabor_kernel,
    load_texture,
    quantize_phase,
    read_pgm,
    resample_texture,
    write_pgm,
)
from iriscap.template import (
    DimensionError,
    ParameterError,
    TemplateGeometry,
    strip_boundaries,
)


@pytest.fixture(scope="module")
def bank():
    return build_filter_bank()


D2_GRID = TemplateGeometry.extracted("D2")


class TestFilterBank:
    def test_shapes(self, bank):
        assert [k.shape for k in bank.kernels] == [(9, 51), (9, 27), (9, 15)]

    def test_dc_free(self, bank):
        for k in bank.kernels:
            assert abs(k.real.mean()) < 1e-10 and abs(k.imag.mean()) < 1e-10
        odd = gabor_kernel(GaborParams(5, 13, 3.3, 1.7, 2.9, 0.4))
        assert abs(odd.real.mean()) < 1e-10 and abs(odd.imag.mean()) < 1e-10

    def test_scaled_parameters(self, bank):
        # each filter's carrier and envelope scale with its column size
        for p, (r, c) in zip(bank.params, KERNEL_SHAPES):
            assert p.wavelength == c / 2 and p.sigma_cols == c / 4 and p.sigma_rows == r / 4
            assert p.orientation == 0.0
        ratio = bank.params[1].wavelength / bank.params[0].wavelength
        assert ratio == pytest.approx(27 / 51)

    @pytest.mark.parametrize("field", ["wavelength", "sigma_rows", "sigma_cols"])
    def test_bad_params(self, field):
        p = dict(rows=9, cols=15, wavelength=7.5, sigma_rows=2.25, sigma_cols=3.75)
        p[field] = 0
        with pytest.raises(ParameterError):
            build_filter_bank([p, p, p])

    def test_needs_three(self):
        with pytest.raises(ParameterError):
            build_filter_bank([GaborParams.default(9, 15)])


class TestQuantize:
    def test_quadrants(self):
        assert quantize_phase(1 + 1j) == (1, 1)
        assert quantize_phase(-1 + 1j) == (0, 1)
        assert quantize_phase(-1 - 1j) == (0, 0)
        assert quantize_phase(1 - 1j) == (1, 0)
        assert quantize_phase(0) == (1, 1)

    def test_gray_property(self, rng):
        phases = rng.uniform(-np.pi, np.pi, 1000)
        # keep away from the axes so the rotation is not a tie case
        phases = phases[np.min(np.abs(np.subtract.outer(phases, np.arange(-4, 5) * np.pi / 2)), axis=1) > 1e-6]
        for phi in phases:
            z = np.exp(1j * phi)
            a, b, c = quantize_phase(z), quantize_phase(z * 1j), quantize_phase(-z)
            assert sum(x != y for x, y in zip(a, b)) == 1
            assert sum(x != y for x, y in zip(a, c)) == 2


class TestEncode:
    def test_constant_texture(self, bank):
        tex = NormalizedTexture.full(np.full((70, 256), 0.5))
        for k in range(3):
            resp = filter_response(tex, bank.kernels[k])
            assert np.abs(resp).max() < 1e-9
            t = encode(tex, bank, k, D2_GRID)
            code, mask = t.unpack()
            assert mask.all() and code.all()  # zero response quantizes to (1, 1)

    def test_kernel_phase(self, bank):
        k = bank.kernels[0]
        pixels = np.zeros((70, 256))
        r0, c0 = 35, 128
        # the pure real part gives an imaginary response of ~1e-17 either side of 0;
        # a small -imag admixture tilts the phase to ~ +0.05 rad so the quadrant is unambiguous
        pixels[r0 - 4:r0 + 5, c0 - 25:c0 + 26] = k.real - 0.05 * k.imag
        tex = NormalizedTexture.full(pixels)
        resp = filter_response(tex, k)[r0, c0]
        assert 0 < np.angle(resp) < 0.1
        code, _ = encode(tex, bank, 0, D2_GRID).unpack()
        assert code[0, r0, c0] and code[1, r0, c0]

    def test_negation_flips_all(self, bank, rng):
        pixels = rng.random((70, 256))
        a = encode(NormalizedTexture.full(pixels), bank, 1, D2_GRID)
        b = encode(NormalizedTexture.full(1 - pixels), bank, 1, D2_GRID)
        ca, ma = a.unpack()
        cb, _ = b.unpack()
        assert ma.all() and (ca != cb).all()

    def test_deterministic_and_extracted(self, bank, rng):
        tex = NormalizedTexture.full(rng.random((64, 512)))
        geo = TemplateGeometry.extracted("D1")
        a = encode(tex, bank, 2, geo, "i", "s")
        assert a.equals(encode(tex, bank, 2, geo, "i", "s"))
        assert a.geometry.is_extracted and a.geometry.bit_planes == 2
        assert strip_boundaries(a).geometry.n_bits == 48128

    def test_mask_coverage_rule(self, bank):
        occ = np.ones((70, 256), dtype=bool)
        occ[:, 100:150] = False
        tex = NormalizedTexture(np.random.default_rng(0).random((70, 256)), occ)
        _, mask = encode(tex, bank, 2, D2_GRID).unpack()  # 9x15 kernel
        # a centre deep in the occluded band sees no usable support
        assert not mask[0, 35, 125]
        # interior rows: 15-wide kernel centred 8 columns left of the band sees 15/15 usable
        assert mask[0, 35, 92]
        # centre 100 spans 93..107: 7 of 15 columns usable -> below half
        assert not mask[0, 35, 100]
        # centre 99 spans 92..106: 8 of 15 usable -> at least half
        assert mask[0, 35, 99]

    def test_mask_monotone(self, bank, rng):
        pixels = rng.random((70, 256))
        occ = rng.random((70, 256)) < 0.8
        smaller = occ & (rng.random((70, 256)) < 0.8)
        _, m1 = encode(NormalizedTexture(pixels, occ), bank, 0, D2_GRID).unpack()
        _, m2 = encode(NormalizedTexture(pixels, smaller), bank, 0, D2_GRID).unpack()
        assert not (m2 & ~m1).any()

    def test_errors(self, bank, rng):
        tex = NormalizedTexture.full(rng.random((64, 512)))
        with pytest.raises(DimensionError):
            encode(tex, bank, 0, D2_GRID)
        with pytest.raises(ParameterError):
            encode(NormalizedTexture.full(rng.random((70, 256))), bank, 3, D2_GRID)

    def test_angular_wrap(self, bank, rng):
        pixels = rng.random((70, 256))
        a, _ = encode(NormalizedTexture.full(pixels), bank, 0, D2_GRID).unpack()
        b, _ = encode(NormalizedTexture.full(np.roll(pixels, 17, axis=1)), bank, 0, D2_GRID).unpack()
        assert np.array_equal(np.roll(a, 17, axis=-1), b)


class TestIO:
    def test_pgm_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, (70, 256), dtype=np.uint8)
        write_pgm(tmp_path / "t.pgm", img)
        assert np.array_equal(read_pgm(tmp_path / "t.pgm"), img)

    def test_ascii_pgm_with_comment(self, tmp_path):
        (tmp_path / "a.pgm").write_text("P2\n# c\n3 2\n255\n0 1 2\n3 4 255\n")
        assert read_pgm(tmp_path / "a.pgm").tolist() == [[0, 1, 2], [3, 4, 255]]

    def test_load_with_occlusion(self, tmp_path):
        write_pgm(tmp_path / "t.pgm", np.full((4, 8), 255))
        occ = np.zeros((4, 8), dtype=np.uint8)
        occ[:, :4] = 255
        write_pgm(tmp_path / "t.mask.pgm", occ)
        tex = load_texture(tmp_path / "t.pgm", tmp_path / "t.mask.pgm")
        assert tex.pixels.max() == 1.0
        assert tex.occlusion[:, :4].all() and not tex.occlusion[:, 4:].any()

    def test_not_pgm(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(b"P6\n1 1\n255\n\0\0\0")
        with pytest.raises(ValueError):
            read_pgm(tmp_path / "x.pgm")

    def test_resample_identity_grid(self, rng):
        tex = NormalizedTexture.full(rng.random((70, 256)))
        out = resample_texture(tex, 70, 256)
        assert np.allclose(out.pixels, tex.pixels)
        assert resample_texture(tex, 64, 512).shape == (64, 512)
