"""Prompt assembly from composable instruction blocks.

The description prompt is a base compare instruction plus zero or more
optional blocks, each toggled by one component flag; with every flag off
it reduces to the bare instruction. Blocks live as editable UTF-8 text
files with ``{{scene_kind}}`` and ``{{candidate_count}}`` placeholders,
so deployments can reword them without touching code.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

SCENE_KINDS = ("indoor", "outdoor")

COMPONENT_FLAGS = (
    "similarity_dissimilarity_hints",
    "object_matching_hints",
    "irrelevant_detail_constraints",
    "text_recognition_hint",
)

# Flag -> template file; order here fixes the block order in the prompt.
_BLOCK_FILES = {
    "similarity_dissimilarity_hints": "similarity_sections.txt",
    "object_matching_hints": "object_matching.txt",
    "irrelevant_detail_constraints": "irrelevant_constraints.txt",
    "text_recognition_hint": "text_recognition.txt",
}

RERANK_MARKER = "FINAL_RANKING:"


class TemplateError(ValueError):
    """Invalid prompt template or component set."""


@dataclass(frozen=True)
class PromptTemplate:
    scene_kind: str
    components: frozenset[str]
    description_prompt_text: str
    rerank_prompt_text: str

    def __post_init__(self) -> None:
        if self.scene_kind not in SCENE_KINDS:
            raise TemplateError(f"unknown scene kind {self.scene_kind!r}")
        unknown = self.components - set(COMPONENT_FLAGS)
        if unknown:
            raise TemplateError(f"unknown component flags {sorted(unknown)}")
        if "similarity_dissimilarity_hints" in self.components:
            if (
                "SIMILARITIES:" not in self.description_prompt_text
                or "DISSIMILARITIES:" not in self.description_prompt_text
            ):
                raise TemplateError(
                    "description prompt must instruct SIMILARITIES:/DISSIMILARITIES: sections"
                )
        if RERANK_MARKER not in self.rerank_prompt_text:
            raise TemplateError(f"rerank prompt must instruct a {RERANK_MARKER} line")


def _read_block(name: str, template_dir: str | Path | None) -> str:
    if template_dir is not None:
        return (Path(template_dir) / name).read_text(encoding="utf-8").strip()
    return (resources.files(__package__) / "templates" / name).read_text(encoding="utf-8").strip()


def build_template(
    scene_kind: str = "outdoor",
    components: tuple[str, ...] | frozenset[str] = COMPONENT_FLAGS,
    template_dir: str | Path | None = None,
) -> PromptTemplate:
    """Compose the description and rerank prompts for one run configuration."""
    enabled = frozenset(components)
    blocks = [_read_block("description_base.txt", template_dir)]
    for flag in COMPONENT_FLAGS:  # fixed order, independent of input order
        if flag in enabled:
            blocks.append(_read_block(_BLOCK_FILES[flag], template_dir))
    description = "\n\n".join(blocks).replace("{{scene_kind}}", scene_kind)
    rerank = _read_block("rerank.txt", template_dir).replace("{{scene_kind}}", scene_kind)
    return PromptTemplate(
        scene_kind=scene_kind,
        components=enabled,
        description_prompt_text=description,
        rerank_prompt_text=rerank,
    )
