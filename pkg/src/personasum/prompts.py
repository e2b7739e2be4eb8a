"""Persona registry and prompt rendering.

The template texts are data, not code: they ship as files under
templates/ and are substituted with plain string replacement so that
braces inside document bodies survive untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from personasum import PersonasumError
from personasum.records import iter_records

_PLACEHOLDER = re.compile(
    r"\{(persona|document|label_summary|model_summary|other_personas|criteria)\}")

CRITERIA_COUNT = 4


class PromptError(PersonasumError):
    pass


class UnknownPersona(PromptError):
    pass


@dataclass(frozen=True)
class Persona:
    """A target audience: the token appears in prompts, the descriptor in the judge brief."""

    name: str
    descriptor: str


@dataclass(frozen=True)
class ChatPrompt:
    system: str
    user: str

    def __post_init__(self):
        if not self.system or not self.user:
            raise ValueError("system and user text must both be non-empty")


@dataclass(frozen=True)
class FinetuneRecord:
    prompt: str
    completion: str
    persona: str
    doc_id: str

    def to_record(self) -> dict:
        return {"prompt": self.prompt, "completion": self.completion,
                "persona": self.persona, "doc_id": self.doc_id}


DEFAULT_PERSONAS = (
    Persona(
        "doctor",
        "A doctor requires a detailed and technical summary about the medical document.",
    ),
    Persona(
        "patient",
        "Patients require a layman's summary about the medical document, with "
        "information about things like causes, effects, treatment etc. that may "
        "be helpful to them.",
    ),
    Persona(
        "normal person",
        "A normal person has no medical knowledge and requires a generic summary "
        "about the medical document.",
    ),
)

# Convenience spellings accepted on the command line.
_ALIASES = {
    "normal": "normal person",
    "normal-person": "normal person",
    "normal_person": "normal person",
}


class PersonaRegistry:
    """Ordered persona set; extensible with user-supplied descriptors."""

    def __init__(self, personas: tuple[Persona, ...] = DEFAULT_PERSONAS):
        self._personas: list[Persona] = list(personas)

    def __iter__(self):
        return iter(self._personas)

    def __len__(self):
        return len(self._personas)

    def names(self) -> list[str]:
        return [p.name for p in self._personas]

    def get(self, name: str) -> Persona:
        key = _ALIASES.get(name.strip().lower(), name.strip().lower())
        for p in self._personas:
            if p.name == key:
                return p
        raise UnknownPersona(f"unknown persona {name!r}; known: {self.names()}")

    def add(self, name: str, descriptor: str) -> None:
        name = name.strip().lower()
        if not name or not descriptor.strip():
            raise PromptError("persona name and descriptor must be non-empty")
        if any(p.name == name for p in self._personas):
            raise PromptError(f"persona {name!r} already registered")
        self._personas.append(Persona(name, descriptor.strip()))

    def others(self, name: str) -> list[Persona]:
        me = self.get(name)
        return [p for p in self._personas if p.name != me.name]

    @classmethod
    def from_file(cls, path: str | Path) -> "PersonaRegistry":
        """Default personas plus extra {name, descriptor} records from a file."""
        reg = cls()
        for record in iter_records(path):
            reg.add(record["name"], record["descriptor"])
        return reg


DEFAULT_REGISTRY = PersonaRegistry()


def _load_template(name: str) -> str:
    return resources.files("personasum").joinpath("templates", name).read_text("utf-8")


GENERATION_SYSTEM = _load_template("generation_system.txt")
GENERATION_USER = _load_template("generation_user.txt")
FINETUNE_USER = _load_template("finetune_user.txt")
CRITIQUE_SYSTEM = _load_template("critique_system.txt")
CRITIQUE_USER = _load_template("critique_user.txt")
CRITIQUE_CRITERIA = tuple(_load_template("critique_criteria.txt").rstrip("\n").split("\n"))

REASK_SUFFIX = "Output the scores only, one number per criterion, nothing else."


def _substitute(template: str, values: dict[str, str]) -> str:
    # Validate against the template, not the output: substituted values are
    # data and may legitimately contain placeholder-shaped text.
    for match in _PLACEHOLDER.finditer(template):
        if match.group(1) not in values:
            raise PromptError(f"unresolved placeholder {match.group(0)} in template")
    text = template
    for key, value in values.items():
        text = text.replace("{" + key + "}", value)
    return text


def render_generation_prompt(persona: Persona | str, document_body: str,
                             registry: PersonaRegistry = DEFAULT_REGISTRY) -> ChatPrompt:
    """Teacher prompt asking for one persona-targeted summary of the document."""
    p = registry.get(persona) if isinstance(persona, str) else persona
    if not document_body.strip():
        raise PromptError("document body is empty")
    user = _substitute(GENERATION_USER, {"persona": p.name, "document": document_body})
    return ChatPrompt(system=GENERATION_SYSTEM, user=user)


def render_finetune_record(persona: Persona | str, document_body: str, summary: str,
                           doc_id: str = "",
                           registry: PersonaRegistry = DEFAULT_REGISTRY) -> FinetuneRecord:
    """Prompt/completion pair for supervised fine-tuning. The summary must be non-empty."""
    p = registry.get(persona) if isinstance(persona, str) else persona
    if not summary.strip():
        raise PromptError("refusing to export an empty summary")
    prompt = _substitute(FINETUNE_USER, {"persona": p.name, "document": document_body})
    return FinetuneRecord(prompt=prompt, completion=summary, persona=p.name, doc_id=doc_id)


def render_inference_prompt(persona: Persona | str, document_body: str,
                            registry: PersonaRegistry = DEFAULT_REGISTRY) -> ChatPrompt:
    """Student-side prompt: fine-tune user text over the generation system brief."""
    p = registry.get(persona) if isinstance(persona, str) else persona
    user = _substitute(FINETUNE_USER, {"persona": p.name, "document": document_body})
    return ChatPrompt(system=GENERATION_SYSTEM, user=user)


def persona_choices(registry: PersonaRegistry = DEFAULT_REGISTRY) -> str:
    names = registry.names()
    if len(names) == 1:
        return names[0]
    return ", ".join(names[:-1]) + " or a " + names[-1]


def render_critique_system(registry: PersonaRegistry = DEFAULT_REGISTRY) -> str:
    """Judge brief composed from the registry; byte-equal to the shipped file for the default set."""
    descriptors = " ".join(p.descriptor for p in registry)
    return (
        "You are an AI assistant who is to evaluate the summary of a medical "
        f"document specific to a certain persona which can be {persona_choices(registry)}. "
        f"{descriptors} You need to return a score between 0 and 1 reflecting the "
        "quality of the generated summary based on some criteria."
    )


def render_critic_prompt(persona: Persona | str, document_body: str, label_summary: str,
                         model_summary: str,
                         criteria: tuple[int, ...] = (1, 2, 3, 4),
                         registry: PersonaRegistry = DEFAULT_REGISTRY) -> ChatPrompt:
    """Judge prompt scoring a candidate against the reference on the chosen criteria.

    Criteria are 1-based indexes into the shipped criterion list and keep
    their original order regardless of the order given.
    """
    p = registry.get(persona) if isinstance(persona, str) else persona
    chosen = sorted(set(criteria))
    if not chosen or chosen[0] < 1 or chosen[-1] > CRITERIA_COUNT:
        raise PromptError(f"criteria must be a non-empty subset of 1..{CRITERIA_COUNT}")
    others = ", ".join(q.name for q in registry.others(p.name))
    lines = [
        _substitute(CRITIQUE_CRITERIA[i - 1], {"persona": p.name, "other_personas": others})
        for i in chosen
    ]
    user = _substitute(CRITIQUE_USER, {
        "persona": p.name,
        "document": document_body,
        "label_summary": label_summary,
        "model_summary": model_summary,
        "criteria": "\n".join(lines),
    })
    return ChatPrompt(system=render_critique_system(registry), user=user)
