import json
from pathlib import Path

import numpy as np
import pytest

from iir_edit import data, text


class TestText:
    def test_tokenize_roundtrip(self):
        p = text.tokenize("a red circle on stripes background")
        assert p.raw == "a red circle on stripes background"
        assert len(p.tokens) == 6
        assert all(0 < t < text.VOCAB_SIZE for t in p.tokens)

    def test_unknown_word(self):
        with pytest.raises(ValueError, match="dragon"):
            text.tokenize("a red dragon on stripes background")

    def test_null_prompt(self):
        assert text.NULL_PROMPT.is_null
        assert not text.tokenize("a red circle on solid background").is_null

    def test_parse_make_inverse(self):
        for color in text.COLORS:
            cap = text.make_caption(color, "square", "checker")
            assert text.parse_caption(cap) == (color, "square", "checker")

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            text.parse_caption("red circle")


class TestEditPrompt:
    def test_color_substitution(self):
        p = data.edit_prompt("a red circle on stripes background", "color", "blue")
        assert p.raw == "a blue circle on stripes background"

    def test_texture_substitution(self):
        p = data.edit_prompt("a red circle on stripes background", "texture", "checker")
        assert p.raw == "a red circle on checker background"

    def test_identity_substitution(self):
        cap = "a red circle on stripes background"
        assert data.edit_prompt(cap, "color", "red").raw == cap

    def test_unknown_value(self):
        with pytest.raises(ValueError):
            data.edit_prompt("a red circle on stripes background", "color", "beige")
        with pytest.raises(ValueError):
            data.edit_prompt("a red circle on stripes background", "shape", "circle")


class TestGenerator:
    @pytest.fixture(scope="class")
    def corpus(self, tmp_path_factory):
        root = tmp_path_factory.mktemp("corpus")
        manifest = data.gen_dataset(12, 32, seed=5, out_dir=root)
        return root, manifest

    def test_deterministic_bytes(self, corpus, tmp_path):
        root, _ = corpus
        data.gen_dataset(12, 32, seed=5, out_dir=tmp_path)
        for rel in ("manifest.json", "images/00003.png", "masks/00007.png"):
            assert (root / rel).read_bytes() == (tmp_path / rel).read_bytes()

    def test_parallel_matches_serial(self, corpus, tmp_path):
        root, _ = corpus
        data.gen_dataset(12, 32, seed=5, out_dir=tmp_path, workers=4)
        for i in range(12):
            rel = f"images/{i:05d}.png"
            assert (root / rel).read_bytes() == (tmp_path / rel).read_bytes()

    def test_mask_matches_rasterized_support(self, corpus):
        root, manifest = corpus
        ds = data.ShapesDataset(root)
        for i in range(len(ds)):
            rec = manifest["examples"][i]
            spec = data.SceneSpec(**rec["scene"])
            _, mask = data.render_scene(spec, 32)
            _, loaded, _ = ds.load(i)
            assert np.array_equal(mask, loaded)
            assert loaded.sum() > 0

    def test_caption_regenerates_from_spec(self, corpus):
        _, manifest = corpus
        for rec in manifest["examples"]:
            spec = data.SceneSpec(**rec["scene"])
            assert spec.caption() == rec["caption"]

    def test_color_table(self, corpus):
        _, manifest = corpus
        table = manifest["color_table"]
        assert len(table) == 8
        assert table["red"] == [1.0, 0.0, 0.0]
        assert table["blue"] == [0.0, 0.0, 1.0]

    def test_rejects_empty(self, tmp_path):
        with pytest.raises(ValueError):
            data.gen_dataset(0, 32, seed=0, out_dir=tmp_path)

    def test_rendered_shape_color(self, corpus):
        root, manifest = corpus
        ds = data.ShapesDataset(root)
        for i in range(len(ds)):
            img, mask, caption = ds.load(i)
            color, _, _ = text.parse_caption(caption)
            expected = np.array(data.COLOR_TABLE[color])
            # 8-bit quantization allows ~1/255 error.
            assert np.allclose(img[mask > 0].mean(axis=0), expected, atol=0.01)
