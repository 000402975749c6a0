import numpy as np
import pytest
import torch
from PIL import Image

from maskcyclegan.data import (
    Batch,
    DatasetError,
    DatasetSpec,
    hflip,
    list_images,
    load_dataset,
    load_image_file,
    load_image_stack,
    train_augment,
)


@pytest.fixture
def two_folders(tmp_path):
    rng = np.random.default_rng(0)
    for name, count in (("a", 5), ("b", 3)):
        folder = tmp_path / name
        folder.mkdir()
        for i in range(count):
            arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
            Image.fromarray(arr).save(folder / f"{i}.png")
    return tmp_path / "a", tmp_path / "b"


class TestDecoding:
    def test_white_maps_to_one(self, tmp_path):
        path = tmp_path / "white.png"
        Image.new("RGB", (8, 8), (255, 255, 255)).save(path)
        img = load_image_file(path, 8)
        assert img.shape == (3, 8, 8)
        np.testing.assert_array_equal(img, np.ones((3, 8, 8), dtype=np.float32))

    def test_black_maps_to_minus_one(self, tmp_path):
        path = tmp_path / "black.png"
        Image.new("RGB", (8, 8), (0, 0, 0)).save(path)
        np.testing.assert_array_equal(load_image_file(path, 8), -np.ones((3, 8, 8), dtype=np.float32))

    def test_grayscale_replicated_to_three_channels(self, tmp_path):
        path = tmp_path / "gray.png"
        arr = np.arange(64, dtype=np.uint8).reshape(8, 8)
        Image.fromarray(arr, mode="L").save(path)
        img = load_image_file(path, 8)
        np.testing.assert_array_equal(img[0], img[1])
        np.testing.assert_array_equal(img[1], img[2])

    def test_resize_to_resolution(self, tmp_path):
        path = tmp_path / "big.png"
        Image.new("RGB", (64, 48), (10, 20, 30)).save(path)
        assert load_image_file(path, 16).shape == (3, 16, 16)

    def test_undecodable_file_is_reported(self, tmp_path):
        path = tmp_path / "fake.png"
        path.write_bytes(b"this is not a png")
        with pytest.raises(DatasetError, match="fake.png"):
            load_image_file(path, 8)


class TestListing:
    def test_missing_directory(self, tmp_path):
        with pytest.raises(DatasetError, match="does not exist"):
            list_images(tmp_path / "nope")

    def test_empty_directory(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(DatasetError, match="no decodable images"):
            list_images(tmp_path / "empty")

    def test_non_image_files_ignored(self, tmp_path):
        folder = tmp_path / "mixed"
        folder.mkdir()
        (folder / "notes.txt").write_text("hi")
        Image.new("RGB", (4, 4)).save(folder / "ok.png")
        assert [p.name for p in list_images(folder)] == ["ok.png"]


class TestLoader:
    def test_infinite_and_batch_invariants(self, two_folders):
        root_a, root_b = two_folders
        spec = DatasetSpec(str(root_a), str(root_b), resolution=16)
        loader = load_dataset(spec, batch_size=2, seed=1)
        for _ in range(10):  # longer than either folder: iterator never ends
            batch = next(loader)
            assert isinstance(batch, Batch)
            assert batch.a.shape == (2, 3, 16, 16)
            assert batch.b.shape == (2, 3, 16, 16)
            assert float(batch.a.min()) >= -1.0 and float(batch.a.max()) <= 1.0

    def test_each_domain_permutes_independently(self, two_folders):
        root_a, root_b = two_folders
        spec = DatasetSpec(str(root_a), str(root_b), resolution=16)
        loader = load_dataset(spec, batch_size=1, seed=3)
        # one full pass over domain a touches every file exactly once
        seen = [next(loader).a for _ in range(5)]
        stacked = torch.stack([s[0] for s in seen])
        for i in range(5):
            for j in range(i + 1, 5):
                assert not torch.equal(stacked[i], stacked[j])

    def test_seeded_loader_deterministic(self, two_folders):
        root_a, root_b = two_folders
        spec = DatasetSpec(str(root_a), str(root_b), resolution=16)
        l1, l2 = load_dataset(spec, seed=9), load_dataset(spec, seed=9)
        for _ in range(7):
            b1, b2 = next(l1), next(l2)
            assert torch.equal(b1.a, b2.a) and torch.equal(b1.b, b2.b)

    def test_from_layout(self, tmp_path):
        for sub in ("trainA", "trainB"):
            (tmp_path / sub).mkdir()
            Image.new("RGB", (4, 4)).save(tmp_path / sub / "x.png")
        spec = DatasetSpec.from_layout(tmp_path, resolution=4)
        assert spec.root_a.endswith("trainA")
        batch = next(load_dataset(spec))
        assert batch.a.shape == (1, 3, 4, 4)

    def test_test_split_derivation(self, tmp_path):
        spec = DatasetSpec.from_layout(tmp_path, resolution=4, split="train")
        test = spec.test_split()
        assert test.root_a.endswith("testA") and test.root_b.endswith("testB")
        assert test.split == "test"


class TestAugment:
    def test_double_flip_is_identity(self):
        img = np.random.default_rng(0).uniform(-1, 1, size=(3, 8, 8)).astype(np.float32)
        np.testing.assert_array_equal(hflip(hflip(img)), img)

    def test_disabled_augment_is_identity(self):
        img = np.random.default_rng(1).uniform(-1, 1, size=(3, 8, 8)).astype(np.float32)
        out = train_augment(img, np.random.default_rng(0), enabled=False)
        np.testing.assert_array_equal(out, img)

    def test_flip_or_identity_only(self):
        img = np.random.default_rng(2).uniform(-1, 1, size=(3, 8, 8)).astype(np.float32)
        out = train_augment(img, np.random.default_rng(3), enabled=True)
        assert np.array_equal(out, img) or np.array_equal(out, hflip(img))

    def test_crop_preserves_resolution(self):
        img = np.random.default_rng(4).uniform(-1, 1, size=(3, 16, 16)).astype(np.float32)
        out = train_augment(img, np.random.default_rng(5), enabled=True, crop=True)
        assert out.shape == (3, 16, 16)


class TestStack:
    def test_stack_shape_and_order(self, two_folders):
        root_a, _ = two_folders
        stack = load_image_stack(root_a, 16)
        assert stack.shape == (5, 3, 16, 16)

    def test_stack_limit(self, two_folders):
        root_a, _ = two_folders
        assert load_image_stack(root_a, 16, limit=2).shape[0] == 2
