"""Shared fixtures: one mock endpoint per session, corpus builders, gateways."""

from __future__ import annotations

import pytest

from personasum.corpus import Document, count_words
from personasum.gateway import CompletionConfig, Gateway

from llm_mock import MockLLMServer

# Doc bodies need 24+ words so the three persona slices barely overlap.
DOC_BODIES = [
    "The patient presented with acute chest pain radiating to the left arm and "
    "was given 300 mg aspirin on arrival. Troponin levels were elevated at 2.3 "
    "and an urgent angiogram confirmed a proximal occlusion requiring a stent.",
    "A 54 year old woman reported persistent migraines lasting over 72 hours "
    "despite rest and hydration. Neurological examination was normal but an MRI "
    "was ordered to exclude structural causes before starting triptan therapy.",
    "Routine screening identified fasting glucose of 8.1 mmol per litre on two "
    "separate visits. The patient was counselled on diet and exercise and "
    "metformin 500 mg twice daily was prescribed with a review in three months.",
    "Following a fall at home the patient sustained a fractured neck of femur "
    "confirmed on radiography. Surgical fixation was performed within 36 hours "
    "and early mobilisation with physiotherapy began on the second day.",
    "Blood cultures grew gram negative rods and intravenous antibiotics were "
    "started empirically. Fever settled within 48 hours and the patient was "
    "switched to oral therapy to complete a fourteen day total course at home.",
    "The child presented with a barking cough and inspiratory stridor at rest. "
    "A single dose of oral dexamethasone was given and symptoms improved within "
    "hours allowing discharge with clear safety netting advice for the parents.",
    "Spirometry demonstrated an obstructive pattern with significant reversibility "
    "after salbutamol. Inhaled corticosteroid therapy was commenced and inhaler "
    "technique was checked and corrected at the follow up appointment.",
    "An elderly man on warfarin attended with a minor head injury and no loss of "
    "consciousness. Given the anticoagulation a CT head was performed which "
    "showed no acute bleed and he was observed for four hours before discharge.",
    "Renal function declined with creatinine rising from 90 to 160 over two "
    "weeks after starting a new anti inflammatory. The drug was stopped and "
    "fluids encouraged with full recovery of renal function at repeat testing.",
    "A painless enlarging neck lump prompted ultrasound and fine needle "
    "aspiration. Cytology confirmed a benign colloid nodule and the patient was "
    "reassured with a plan for repeat ultrasound in twelve months time.",
]


def make_corpus(n: int = 10, split: str = "train") -> list[Document]:
    docs = []
    for i in range(n):
        body = DOC_BODIES[i % len(DOC_BODIES)]
        if i >= len(DOC_BODIES):
            body = f"Case {i}. " + body
        docs.append(Document(
            doc_id=f"doc{i:03d}",
            source_url=f"https://example.org/case/{i}",
            title=f"Case {i}",
            body=body,
            word_count=count_words(body),
            split=split,
        ))
    return docs


@pytest.fixture(scope="session")
def mock_llm():
    server = MockLLMServer().start()
    yield server
    server.stop()


@pytest.fixture
def gateway(tmp_path):
    """Gateway with near-zero backoff and an isolated cache directory."""
    return Gateway(cache_dir=tmp_path / "cache", backoff_base_s=0.001,
                   backoff_cap_s=0.002)


@pytest.fixture
def config(mock_llm):
    def factory(**overrides) -> CompletionConfig:
        defaults = dict(endpoint_url=mock_llm.completions_url, model_id="mock-model",
                        temperature=0.0, max_new_tokens=350, timeout_s=10.0,
                        max_retries=3, role="teacher")
        defaults.update(overrides)
        return CompletionConfig(**defaults)
    return factory


@pytest.fixture
def corpus():
    return make_corpus()
