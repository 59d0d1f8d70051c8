"""Caption grammar, fixed vocabulary, and tokenization.

Captions follow "a {color} {shape} on {texture} background". The empty
token sequence is the reserved NULL prompt used for classifier-free
guidance.
"""
from __future__ import annotations

from dataclasses import dataclass

MAX_TOKENS = 16

SHAPES = ("circle", "square", "triangle")
COLORS = ("red", "green", "blue", "yellow", "cyan", "magenta", "orange", "purple")
TEXTURES = ("solid", "stripes", "checker")

# id 0 is padding; word ids are stable across runs.
_WORDS = ("a", "on", "background") + SHAPES + COLORS + TEXTURES
PAD_ID = 0
VOCAB = {w: i + 1 for i, w in enumerate(_WORDS)}
VOCAB_SIZE = len(VOCAB) + 1


@dataclass(frozen=True)
class Prompt:
    tokens: tuple[int, ...]
    raw: str

    def __post_init__(self):
        if len(self.tokens) > MAX_TOKENS:
            raise ValueError(f"prompt longer than {MAX_TOKENS} tokens")
        for t in self.tokens:
            if not 0 < t < VOCAB_SIZE:
                raise ValueError(f"token id {t} outside vocabulary")

    @property
    def is_null(self) -> bool:
        return len(self.tokens) == 0


NULL_PROMPT = Prompt(tokens=(), raw="")


def tokenize(caption: str) -> Prompt:
    words = caption.split()
    ids = []
    for w in words:
        if w not in VOCAB:
            raise ValueError(f"unknown word {w!r} (vocabulary: {sorted(VOCAB)})")
        ids.append(VOCAB[w])
    return Prompt(tokens=tuple(ids), raw=caption)


def make_caption(color: str, shape: str, texture: str) -> str:
    if color not in COLORS:
        raise ValueError(f"unknown color {color!r}")
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}")
    if texture not in TEXTURES:
        raise ValueError(f"unknown texture {texture!r}")
    return f"a {color} {shape} on {texture} background"


def parse_caption(caption: str) -> tuple[str, str, str]:
    """Inverse of make_caption; raises on anything outside the grammar."""
    words = caption.split()
    if (len(words) != 6 or words[0] != "a" or words[3] != "on"
            or words[5] != "background"):
        raise ValueError(f"caption {caption!r} does not match the grammar")
    color, shape, texture = words[1], words[2], words[4]
    make_caption(color, shape, texture)
    return color, shape, texture
