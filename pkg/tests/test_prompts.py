"""Template fidelity: rendered prompts must match the shipped texts byte for byte."""

from __future__ import annotations

from importlib import resources

import pytest

from personasum.prompts import (
    CRITIQUE_CRITERIA,
    DEFAULT_PERSONAS,
    GENERATION_SYSTEM,
    PersonaRegistry,
    PromptError,
    UnknownPersona,
    persona_choices,
    render_critic_prompt,
    render_critique_system,
    render_finetune_record,
    render_generation_prompt,
    render_inference_prompt,
)

DOC = "The patient was treated with 40 mg of furosemide and discharged."
GOLD = "Treated with furosemide, now discharged."
CAND = "The patient got a diuretic and went home."


def _template(name: str) -> str:
    return resources.files("personasum").joinpath("templates", name).read_text("utf-8")


def test_generation_user_matches_template():
    prompt = render_generation_prompt("doctor", DOC)
    expected = _template("generation_user.txt")
    expected = expected.replace("{persona}", "doctor").replace("{document}", DOC)
    assert prompt.user == expected
    assert prompt.system == GENERATION_SYSTEM


def test_generation_prompt_prefix_and_suffix():
    prompt = render_generation_prompt("patient", DOC)
    assert prompt.user.startswith(
        "Summarize the medical document given below from the perspective of a patient "
        "and return the summary only.")
    assert prompt.user.endswith("Document: " + DOC)


def test_generation_system_mentions_each_persona():
    for persona in ("doctor", "patient", "normal person"):
        assert persona in GENERATION_SYSTEM


def test_generation_injective_over_inputs():
    seen = set()
    for persona in ("doctor", "patient", "normal person"):
        for doc in (DOC, DOC + " More.", "Another document entirely."):
            seen.add(render_generation_prompt(persona, doc).user)
    assert len(seen) == 9


def test_braces_in_document_survive():
    doc = 'Dose chart: {"mg": 40} applies to {persona} literally.'
    prompt = render_generation_prompt("doctor", doc)
    assert '{"mg": 40}' in prompt.user
    # the braces from the document are data, not placeholders, yet a
    # template placeholder name inside a document must not raise
    assert "{persona} literally" in prompt.user


def test_generation_rejects_empty_document():
    with pytest.raises(PromptError):
        render_generation_prompt("doctor", "   ")


def test_finetune_record_matches_template():
    record = render_finetune_record("normal person", DOC, GOLD, doc_id="d1")
    expected = _template("finetune_user.txt")
    expected = expected.replace("{persona}", "normal person").replace("{document}", DOC)
    assert record.prompt == expected
    assert record.prompt == (
        "Summarize the medical document given below from the perspective of a "
        "normal person:\n### Document: " + DOC)
    assert record.completion == GOLD
    assert record.persona == "normal person"
    assert record.doc_id == "d1"


def test_finetune_rejects_empty_summary():
    with pytest.raises(PromptError):
        render_finetune_record("doctor", DOC, "  ")


def test_inference_prompt_reuses_finetune_user():
    record = render_finetune_record("patient", DOC, GOLD)
    prompt = render_inference_prompt("patient", DOC)
    assert prompt.user == record.prompt
    assert prompt.system == GENERATION_SYSTEM


def test_critique_system_matches_shipped_file():
    assert render_critique_system() == _template("critique_system.txt")


def test_persona_choices_wording():
    assert persona_choices() == "doctor, patient or a normal person"


def test_critic_prompt_full_criteria():
    prompt = render_critic_prompt("doctor", DOC, GOLD, CAND)
    assert "Document: " + DOC in prompt.user
    assert "Ground truth summary : " + GOLD in prompt.user
    assert "Summary from the perspective of a doctor: " + CAND in prompt.user
    # all four criteria lines present, persona substituted
    tail = prompt.user.split("without any explanation:\n", 1)[1]
    lines = tail.split("\n")
    assert len(lines) == 4
    assert all(line.startswith("- ") for line in lines)
    assert "doctor" in tail
    assert "patient, normal person" in tail  # the other-personas clause


def test_critic_prompt_criteria_subset_ordered():
    full = render_critic_prompt("doctor", DOC, GOLD, CAND).user
    all_lines = full.split("without any explanation:\n", 1)[1].split("\n")
    sub = render_critic_prompt("doctor", DOC, GOLD, CAND, criteria=(3, 1)).user
    sub_lines = sub.split("without any explanation:\n", 1)[1].split("\n")
    assert sub_lines == [all_lines[0], all_lines[2]]


def test_critic_prompt_rejects_bad_criteria():
    for bad in ((), (0,), (5,), (1, 9)):
        with pytest.raises(PromptError):
            render_critic_prompt("doctor", DOC, GOLD, CAND, criteria=bad)


def test_criteria_file_shape():
    assert len(CRITIQUE_CRITERIA) == 4
    assert all(c.startswith("- ") for c in CRITIQUE_CRITERIA)
    assert "{persona}" in CRITIQUE_CRITERIA[0]
    assert "{other_personas}" in CRITIQUE_CRITERIA[2]


def test_registry_aliases_and_unknown():
    reg = PersonaRegistry()
    assert reg.get("Normal").name == "normal person"
    assert reg.get("normal_person").name == "normal person"
    with pytest.raises(UnknownPersona):
        reg.get("surgeon")


def test_registry_others_ordering():
    reg = PersonaRegistry()
    assert [p.name for p in reg.others("patient")] == ["doctor", "normal person"]


def test_registry_extension_flows_into_prompts():
    reg = PersonaRegistry()
    reg.add("nurse", "A nurse needs a concise handover-style summary.")
    assert persona_choices(reg) == "doctor, patient, normal person or a nurse"
    system = render_critique_system(reg)
    assert "handover-style" in system
    prompt = render_critic_prompt("nurse", DOC, GOLD, CAND, registry=reg)
    assert "Summary from the perspective of a nurse: " in prompt.user
    assert "doctor, patient, normal person" in prompt.user


def test_registry_rejects_duplicates_and_blank():
    reg = PersonaRegistry()
    with pytest.raises(PromptError):
        reg.add("doctor", "again")
    with pytest.raises(PromptError):
        reg.add("  ", "blank name")


def test_registry_from_file(tmp_path):
    path = tmp_path / "personas.jsonl"
    path.write_text('{"name": "vet", "descriptor": "A vet reads animal cases."}\n',
                    encoding="utf-8")
    reg = PersonaRegistry.from_file(path)
    assert reg.names() == ["doctor", "patient", "normal person", "vet"]


def test_default_personas_have_descriptors():
    for persona in DEFAULT_PERSONAS:
        assert persona.descriptor.strip()
        assert persona.name == persona.name.lower()
