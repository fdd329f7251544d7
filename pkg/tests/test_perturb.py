import numpy as np
import pytest

from proxyvos.dataset import read_image, write_mask
from proxyvos.grids import Image, LabelMask
from proxyvos.perturb import (
    PerturbationSpec,
    apply_perturbation,
    blur_kernel,
    blur_sigma,
    frame_digest,
    gaussian_blur,
    gaussian_noise,
    noise_field,
    perturb_dataset,
    salt_pepper,
)
from proxyvos.synth import synth_dataset


def gray(value=128, h=32, w=32):
    return Image(np.full((h, w, 3), value, dtype=np.uint8))


class TestGaussianNoise:
    def test_sigma_zero_identity(self):
        img = gray()
        assert gaussian_noise(img, 0, seed=1).data.tobytes() == img.data.tobytes()

    def test_deterministic(self):
        img = gray()
        a = gaussian_noise(img, 10, seed=42)
        b = gaussian_noise(img, 10, seed=42)
        assert a.data.tobytes() == b.data.tobytes()
        c = gaussian_noise(img, 10, seed=43)
        assert a.data.tobytes() != c.data.tobytes()

    def test_noise_statistics(self):
        # 256*256*3 = 196608 normals: CLT puts the sample std well inside
        # [9.8, 10.2] and the mean inside [-0.1, 0.1]
        field = noise_field(256, 256, 10.0, seed=7)
        assert 9.8 <= field.std() <= 10.2
        assert -0.1 <= field.mean() <= 0.1

    def test_clamped_output_range(self):
        img = gray(250)
        out = gaussian_noise(img, 30, seed=0)
        assert out.data.max() <= 255 and out.data.min() >= 0


class TestSaltPepper:
    def test_zero_points(self):
        img = gray()
        assert salt_pepper(img, 0, seed=1).data.tobytes() == img.data.tobytes()

    def test_full_coverage(self):
        img = gray(128, 8, 8)
        out = salt_pepper(img, 10_000, seed=3)
        flat = out.data.reshape(-1, 3)
        assert all(tuple(px) in ((0, 0, 0), (255, 255, 255)) for px in flat.tolist())

    def test_exact_point_count(self):
        img = gray(128, 64, 64)
        out = salt_pepper(img, 1000, seed=5)
        changed = np.any(out.data != img.data, axis=2)
        assert int(changed.sum()) == 1000

    def test_both_colors_appear(self):
        out = salt_pepper(gray(128, 64, 64), 1000, seed=5)
        flat = out.data.reshape(-1, 3)
        assert (flat == 255).all(axis=1).any()
        assert (flat == 0).all(axis=1).any()


class TestGaussianBlur:
    def test_constant_identity(self):
        img = gray(77)
        for k in (3, 7, 9):
            assert gaussian_blur(img, k).data.tobytes() == img.data.tobytes()

    def test_default_sigmas(self):
        assert blur_sigma(7) == pytest.approx(1.4)
        assert blur_sigma(9) == pytest.approx(1.7)

    def test_impulse_against_outer_product_oracle(self):
        arr = np.zeros((15, 15, 3), dtype=np.uint8)
        arr[7, 7] = 255
        out = gaussian_blur(Image(arr), 7)
        g = blur_kernel(7)
        kernel2d = np.outer(g, g)
        expected = np.zeros((15, 15))
        expected[7 - 3 : 7 + 4, 7 - 3 : 7 + 4] = 255.0 * kernel2d
        expected = np.floor(expected + 0.5)
        for c in range(3):
            np.testing.assert_array_equal(out.data[:, :, c], expected.astype(np.uint8))
        assert out.data[7, 7, 0] == int(np.floor(255.0 * g[3] ** 2 + 0.5))

    def test_mean_preserved_within_rounding(self, rng):
        arr = rng.integers(0, 256, size=(40, 40, 3)).astype(np.uint8)
        img = Image(arr)
        out = gaussian_blur(img, 9)
        assert abs(float(out.data.mean()) - float(img.data.mean())) <= 0.5

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            gaussian_blur(gray(), 8)
        with pytest.raises(ValueError):
            PerturbationSpec("gaussian_blur", 4)


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            PerturbationSpec("unknown", 1)
        with pytest.raises(ValueError):
            PerturbationSpec("gaussian_noise", -1)
        with pytest.raises(ValueError):
            PerturbationSpec("salt_pepper", -5)

    def test_labels(self):
        assert PerturbationSpec("gaussian_blur", 7).label() == "gaussian_blur_7x7"
        assert PerturbationSpec("gaussian_noise", 10).label() == "gaussian_noise_10"
        assert PerturbationSpec("identity").label() == "identity"


class TestPerturbDataset:
    @pytest.fixture
    def clean_root(self, tmp_path):
        root = tmp_path / "clean"
        synth_dataset(root, frames=3, objects=1, seed=0, size=56)
        return root

    def test_identity_byte_identical(self, clean_root, tmp_path):
        out = tmp_path / "ident"
        n = perturb_dataset(clean_root, PerturbationSpec("identity"), out)
        assert n == 3
        for src in sorted((clean_root / "JPEGImages").rglob("*.png")):
            dst = out / src.relative_to(clean_root)
            assert dst.read_bytes() == src.read_bytes()
        for src in sorted((clean_root / "Annotations").rglob("*.png")):
            dst = out / src.relative_to(clean_root)
            assert dst.read_bytes() == src.read_bytes()

    def test_deterministic_golden_hashes(self, clean_root, tmp_path):
        spec = PerturbationSpec("gaussian_noise", 30, seed=9)
        perturb_dataset(clean_root, spec, tmp_path / "a")
        perturb_dataset(clean_root, spec, tmp_path / "b")
        frames_a = sorted((tmp_path / "a" / "JPEGImages").rglob("*.png"))
        frames_b = sorted((tmp_path / "b" / "JPEGImages").rglob("*.png"))
        digests_a = [frame_digest(read_image(p)) for p in frames_a]
        digests_b = [frame_digest(read_image(p)) for p in frames_b]
        assert digests_a == digests_b

    def test_noise_changes_every_frame(self, clean_root, tmp_path):
        spec = PerturbationSpec("gaussian_noise", 30, seed=4)
        out = tmp_path / "noisy"
        perturb_dataset(clean_root, spec, out)
        for src in sorted((clean_root / "JPEGImages").rglob("*.png")):
            dst = out / src.relative_to(clean_root)
            assert np.any(read_image(dst).data != read_image(src).data)

    def test_masks_untouched_and_sizes_kept(self, clean_root, tmp_path):
        out = tmp_path / "blurred"
        perturb_dataset(clean_root, PerturbationSpec("gaussian_blur", 7), out)
        for src in sorted((clean_root / "Annotations").rglob("*.png")):
            dst = out / src.relative_to(clean_root)
            assert dst.read_bytes() == src.read_bytes()
        for src in sorted((clean_root / "JPEGImages").rglob("*.png")):
            dst = out / src.relative_to(clean_root)
            assert read_image(dst).data.shape == read_image(src).data.shape

    def test_jpeg_frames_become_png(self, tmp_path):
        from PIL import Image as PILImage

        root = tmp_path / "jpgset"
        (root / "JPEGImages" / "seq").mkdir(parents=True)
        (root / "Annotations" / "seq").mkdir(parents=True)
        rng = np.random.Generator(np.random.Philox(key=1))
        for t in range(2):
            arr = rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)
            PILImage.fromarray(arr).save(root / "JPEGImages" / "seq" / f"{t:05d}.jpg")
        write_mask(root / "Annotations" / "seq" / "00000.png",
                   LabelMask(np.zeros((16, 16), dtype=np.int32), 0))
        out = tmp_path / "out"
        perturb_dataset(root, PerturbationSpec("gaussian_noise", 10, seed=0), out)
        assert (out / "JPEGImages" / "seq" / "00000.png").is_file()
        assert not (out / "JPEGImages" / "seq" / "00000.jpg").exists()


class TestApply:
    def test_per_frame_seed_override(self):
        img = gray()
        spec = PerturbationSpec("gaussian_noise", 10, seed=1)
        a = apply_perturbation(img, spec, seed=100)
        b = apply_perturbation(img, spec, seed=100)
        c = apply_perturbation(img, spec, seed=101)
        assert a.data.tobytes() == b.data.tobytes() != c.data.tobytes()
