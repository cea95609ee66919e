"""Prompt construction: suffix templates, style keywords, and recaption requests."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .compositor import CanvasSpec, resize_to_bbox
from .errors import ConfigError
from .types import TransparentLayer

# The eight background-isolation suffix templates, instantiated with a color
# word. Template G carries no color placeholder on purpose.
SUFFIX_TEMPLATES: dict[str, str] = {
    "A": "on a solid plain {color} background.",
    "B": "with a clear, solid {color} background.",
    "C": "on a solid single {color} background.",
    "D": "floating with a background that is solid {color}.",
    "E": "cut-out on a solid {color} background.",
    "F": "standing on a background that is fully solid {color}",
    "G": "without any surrounding details",
    "H": "isolated on a solid {color} background",
}

DEFAULT_TEMPLATE_ID = "H"
DEFAULT_COLOR = "gray"

COLOR_WORDS = frozenset(
    {
        "gray",
        "green",
        "blue",
        "red",
        "white",
        "black",
        "transparent",
        "half green and half red",
        "half red and half blue",
    }
)

#: Uniform backdrop used wherever "a gray background" is pasted or matched.
GRAY_RGB = (128, 128, 128)

# Style keywords of the released set. The five most frequent are fixed; the
# rest are registry defaults and can be overridden from a config file.
DEFAULT_STYLES: tuple[str, ...] = (
    "toy",
    "melting silver",
    "line draw",
    "ink",
    "doodle art",
    "watercolor",
    "pixel art",
    "origami",
    "clay",
    "neon",
    "sticker",
    "paper cut",
    "graffiti",
    "mosaic",
    "stained glass",
    "chalk",
    "embroidery",
    "low poly",
    "crayon",
    "vaporwave",
    "woodcut",
)


@dataclass(frozen=True)
class SuffixTemplate:
    id: str
    text: str

    def instantiate(self, color: str) -> str:
        return self.text.format(color=color)


@dataclass(frozen=True)
class StyleKeyword:
    name: str


class PromptRegistry:
    """Holds the suffix templates, allowed color words, and style keywords.

    Byte-stable across runs; overridable from a JSON config file with any of
    the keys "templates", "colors", "styles".
    """

    def __init__(
        self,
        templates: Optional[dict[str, str]] = None,
        colors: Optional[frozenset[str]] = None,
        styles: Optional[tuple[str, ...]] = None,
    ):
        self.templates = {k: SuffixTemplate(k, v) for k, v in (templates or SUFFIX_TEMPLATES).items()}
        self.colors = frozenset(colors or COLOR_WORDS)
        self.styles = tuple(styles or DEFAULT_STYLES)

    @classmethod
    def from_config_file(cls, path: str | Path) -> "PromptRegistry":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            templates=data.get("templates"),
            colors=frozenset(data["colors"]) if "colors" in data else None,
            styles=tuple(data["styles"]) if "styles" in data else None,
        )

    def template(self, template_id: str) -> SuffixTemplate:
        if template_id not in self.templates:
            raise ConfigError(f"unknown suffix template {template_id!r}")
        return self.templates[template_id]

    def style(self, name: str) -> StyleKeyword:
        if name not in self.styles:
            raise ConfigError(f"style {name!r} is not registered")
        return StyleKeyword(name)


DEFAULT_REGISTRY = PromptRegistry()


def apply_suffix(
    prompt: str,
    template: str = DEFAULT_TEMPLATE_ID,
    color: str = DEFAULT_COLOR,
    registry: PromptRegistry = DEFAULT_REGISTRY,
) -> str:
    """Append the instantiated suffix to a prompt; idempotent.

    Returns ``prompt + ", " + suffix``. If the suffix is already present the
    prompt comes back unchanged, so the original prompt body is never altered.
    """
    if not prompt:
        raise ValueError("prompt must be non-empty")
    tpl = registry.template(template)
    if color not in registry.colors:
        raise ConfigError(f"unknown color word {color!r}")
    suffix = tpl.instantiate(color)
    if prompt.endswith(suffix):
        return prompt
    return f"{prompt}, {suffix}"


def paste_on_gray(
    layer: TransparentLayer,
    canvas: CanvasSpec | tuple[int, int],
    gray: tuple[int, int, int] = GRAY_RGB,
) -> np.ndarray:
    """Scale a layer to fit centered in the canvas and blend it over uniform gray.

    Aspect ratio is preserved; returns an (h, w, 3) uint8 RGB raster. The
    canvas may be any (width, height); recaption paste-ups have no
    generation-grid constraint.
    """
    cw, ch = (canvas.width, canvas.height) if isinstance(canvas, CanvasSpec) else canvas
    lw, lh = layer.image.width, layer.image.height
    scale = min(cw / lw, ch / lh)
    fw = max(1, round(lw * scale))
    fh = max(1, round(lh * scale))
    fitted = resize_to_bbox(layer, (0, 0, fw, fh)) if (fw, fh) != (lw, lh) else layer
    out = np.empty((ch, cw, 3), dtype=np.float32)
    out[:] = np.asarray(gray, dtype=np.float32)
    x0 = (cw - fw) // 2
    y0 = (ch - fh) // 2
    a = fitted.image.alpha.astype(np.float32)[:, :, None] / 255.0
    rgb = fitted.image.rgb.astype(np.float32)
    region = out[y0 : y0 + fh, x0 : x0 + fw]
    out[y0 : y0 + fh, x0 : x0 + fw] = rgb * a + region * (1.0 - a)
    return np.rint(out).astype(np.uint8)


# Instruction template for style-aware recaptioning; {style} is substituted.
STYLE_RECAPTION_TEMPLATE = """\
You will receive an RGBA image placed on a gray background. Your task is to generate a highly detailed description of the image's content while adhering to a given stylistic ({style}) requirement.

**Key Guidelines:**

1. **Ignore the Gray Background:**
    - Do not mention or describe the gray background in any way. Focus solely on the foreground content.

2. **Handling Text in the Image:**
    - If the image contains any textual elements, the description **must** begin with **"Text:"** followed by a precise transcription of all visible text.
    - Transcribe every word, symbol, punctuation mark, and character **without omission or modification**.
    - The description of text must be brief and the style description should be limited to 5 words.

3. **Handling Non-Text Elements:**
    - If the image contains **non-text elements**, generate an **detailed** description, capturing all visible aspects.
    - Ensure that the provided style, {style}, is seamlessly **integrated into the description**, maintaining coherence and natural flow.

4. **Output Format:**
    - Provide only the description of the image. Do **not** include any additional explanations, comments, or meta-information about the task itself.
    - The description **must explicitly state** that the image is in **{style} style**, starting with **"This is a {style} style image."** (VERY IMPORTANT)
    - Limited to 70 words!!!

The image is shown below:
"""

# Instruction template for generating creative single-object captions from an
# object word; shipped for test-set construction.
CREATIVE_CAPTION_TEMPLATE = """\
You are tasked with generating imaginative and creative image descriptions based on a given object word. The generated description should follow these specific guidelines:

1. Input: you will receive a single object word (e.g., "penguin", "teapot", "robot"). Use this object as the central focus of the description.

2. Output requirements:
- The description should be **creative and unexpected**, modifying the object or adding elements that make it unusual, humorous, or visually striking.
- The description **must not include details about the background** - focus only on the main object and any additional elements that make it more interesting.
- Aim for a **concise but vivid** description, ideally **within 20 to 30 words**.
- Use **strong visual language** to create a mental image.
- Avoid generic descriptions - make it **fun, unique, and imaginative**.

3. Constraints:
- Do **not** include the background in the description.
- Feel free to **modify the object's appearance, abilities, or accessories** to make it more interesting.
- If necessary, **add related objects**.
- Keep the tone fun, artistic, and engaging.

Please directly respond to the prompt with the creative description.

Object word: {object_word}
"""


@dataclass(frozen=True)
class RecaptionRequest:
    """An instruction plus the RGB raster to caption."""

    instruction: str
    image: np.ndarray
    style: str


def build_style_recaption_request(
    image: np.ndarray,
    style: StyleKeyword | str,
    registry: PromptRegistry = DEFAULT_REGISTRY,
) -> RecaptionRequest:
    """Fill the style-recaption instruction template for one gray-backed layer image."""
    name = style.name if isinstance(style, StyleKeyword) else registry.style(style).name
    return RecaptionRequest(
        instruction=STYLE_RECAPTION_TEMPLATE.format(style=name),
        image=image,
        style=name,
    )
