"""Closed clinical vocabulary for synthetic corpora.

Each concept has a canonical surface form, which is what patient claims
entries contain, and three paraphrases that share no word with it. Easy
criteria name a concept by its canonical form; hard criteria use a
paraphrase.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, List, Tuple


@dataclass(frozen=True)
class Concept:
    concept_id: str
    category: str  # diagnosis | medication | procedure
    code: str
    canonical: str
    paraphrases: Tuple[str, str, str]

    @property
    def forms(self) -> Tuple[str, ...]:
        return (self.canonical,) + self.paraphrases


def _c(cid, category, code, canonical, *paraphrases) -> Concept:
    return Concept(cid, category, code, canonical, tuple(paraphrases))


CONCEPTS: Tuple[Concept, ...] = (
    # diagnoses
    _c("dx01", "diagnosis", "I63.9", "acute ischemic stroke", "sudden blockage of cerebral flow", "brain attack from a clot", "occlusive cerebrovascular event"),
    _c("dx02", "diagnosis", "I48.91", "atrial fibrillation", "irregularly irregular heartbeat", "quivering upper chambers", "chaotic cardiac rhythm"),
    _c("dx03", "diagnosis", "I10", "essential hypertension", "raised arterial pressure", "elevated vascular tone", "persistently high BP"),
    _c("dx04", "diagnosis", "E11.9", "type 2 diabetes", "adult onset sugar disease", "non insulin dependent hyperglycemia", "chronic glucose intolerance"),
    _c("dx05", "diagnosis", "E78.5", "hyperlipidemia", "excess serum fats", "abnormal cholesterol profile", "dyslipoproteinemia"),
    _c("dx06", "diagnosis", "I61.9", "intracerebral hemorrhage", "bleeding inside the brain", "hemorrhagic stroke", "parenchymal bleed"),
    _c("dx07", "diagnosis", "G45.9", "transient ischemic attack", "mini stroke", "temporary neurological deficit", "brief cerebral warning episode"),
    _c("dx08", "diagnosis", "N18.3", "chronic kidney disease", "impaired renal function", "longstanding nephropathy", "reduced glomerular filtration"),
    _c("dx09", "diagnosis", "I50.9", "heart failure", "weak cardiac pump", "congestive cardiomyopathy", "reduced ejection fraction"),
    _c("dx10", "diagnosis", "C80.1", "malignant neoplasm", "active cancer", "tumor disease", "oncologic illness"),
    _c("dx11", "diagnosis", "K92.2", "gastrointestinal hemorrhage", "bleeding from the gut", "digestive tract blood loss", "melena or hematemesis"),
    _c("dx12", "diagnosis", "G40.909", "epilepsy", "recurrent seizures", "convulsive disorder", "seizure tendency"),
    _c("dx13", "diagnosis", "F03.90", "dementia", "major neurocognitive decline", "progressive memory loss", "cognitive impairment syndrome"),
    _c("dx14", "diagnosis", "Z33.1", "pregnancy", "expecting a baby", "gravid state", "currently with child"),
    _c("dx15", "diagnosis", "I21.9", "myocardial infarction", "heart attack", "coronary occlusion event", "cardiac muscle death"),
    _c("dx16", "diagnosis", "D69.6", "thrombocytopenia", "low platelet count", "platelet deficiency", "reduced thrombocytes"),
    # medications
    _c("rx01", "medication", "tablet", "atorvastatin", "cholesterol lowering statin", "HMG CoA reductase inhibitor", "lipitor"),
    _c("rx02", "medication", "tablet", "warfarin", "vitamin K antagonist", "coumadin", "oral coumarin anticoagulant"),
    _c("rx03", "medication", "tablet", "apixaban", "factor Xa blocker", "eliquis", "direct oral anticoagulant"),
    _c("rx04", "medication", "tablet", "clopidogrel", "P2Y12 receptor antagonist", "plavix", "thienopyridine antiplatelet"),
    _c("rx05", "medication", "tablet", "aspirin", "acetylsalicylic acid", "ASA", "salicylate antiplatelet"),
    _c("rx06", "medication", "tablet", "metformin", "biguanide", "glucophage", "first line glucose lowering drug"),
    _c("rx07", "medication", "injection", "insulin glargine", "long acting basal hormone", "lantus", "once daily glycemic injection"),
    _c("rx08", "medication", "tablet", "lisinopril", "ACE inhibitor", "zestril", "angiotensin converting enzyme blocker"),
    _c("rx09", "medication", "injection", "alteplase", "tissue plasminogen activator", "tPA", "clot dissolving thrombolytic"),
    _c("rx10", "medication", "tablet", "levetiracetam", "keppra", "antiseizure medicine", "anticonvulsant therapy"),
    _c("rx11", "medication", "injection", "heparin", "unfractionated anticoagulant infusion", "IV blood thinner", "parenteral antithrombin agent"),
    # procedures
    _c("px01", "procedure", "70450", "CT head", "computed tomography of the skull", "cranial CAT scan", "noncontrast brain tomogram"),
    _c("px02", "procedure", "70551", "MRI brain", "magnetic resonance of cerebrum", "cranial MR imaging", "neuro magnetic scan"),
    _c("px03", "procedure", "37184", "mechanical thrombectomy", "endovascular clot retrieval", "stent retriever intervention", "catheter based embolectomy"),
    _c("px04", "procedure", "35301", "carotid endarterectomy", "surgical plaque removal from neck artery", "CEA operation", "open cervical vessel repair"),
    _c("px05", "procedure", "93306", "echocardiogram", "cardiac ultrasound", "heart sonography", "transthoracic echo study"),
    _c("px06", "procedure", "95816", "electroencephalogram", "EEG recording", "brain wave study", "scalp electrical monitoring"),
    _c("px07", "procedure", "43246", "gastrostomy tube placement", "PEG insertion", "percutaneous feeding access", "enteral nutrition catheter"),
    _c("px08", "procedure", "90935", "hemodialysis", "renal replacement therapy", "artificial kidney treatment", "blood filtration session"),
)

CONCEPT_INDEX: Dict[str, Concept] = {c.concept_id: c for c in CONCEPTS}

DOSES = ("5 mg", "10 mg", "20 mg", "40 mg", "81 mg", "100 mg", "500 mg")

# Sentence frames. Inclusion and exclusion share the condition-holds reading.
FRAMES: Dict[str, Tuple[Tuple[str, ...], ...]] = {
    "diagnosis": (
        ("Patients with a diagnosis of", "Individuals diagnosed with", "People who have been diagnosed with"),
        ("Documented history of", "Prior medical record of", "Previously recorded"),
    ),
    "medication": (
        ("Currently receiving", "Presently treated with", "Actively taking"),
        ("Prescribed", "Given a prescription for", "Has an active order for"),
    ),
    "procedure": (
        ("Underwent", "Has undergone", "Previously had"),
        ("Status post", "Following completion of", "After receiving"),
    ),
}

# General clinical paraphrases understood by the mock generator.
GENERAL_SYNONYMS: Tuple[Tuple[str, ...], ...] = (
    ("women of child bearing potential", "women of reproductive age", "women who are capable of bearing children", "females able to conceive"),
    ("Positive urine or serum pregnancy test", "A positive result on a urine or serum pregnancy test", "A urine or serum pregnancy test that is positive", "Pregnancy confirmed by a positive urine or serum test"),
    ("Acute ischemic stroke patients", "Patients suffering from a sudden blockage of blood flow to the brain due to ischemia", "Individuals experiencing a sudden onset of neurological deficits resulting from a lack of blood supply to the brain", "People with an abrupt interruption of blood flow to the brain caused by an ischemic event"),
    ("stroke patients", "patients with stroke", "individuals who had a stroke", "people affected by stroke"),
    ("age 18 years or older", "aged at least 18 years", "adults 18 years of age or above", "at least eighteen years old"),
)

_TOKEN = re.compile(r"[A-Za-z0-9]+")


def tokens(text: str) -> List[str]:
    return [t.lower() for t in _TOKEN.findall(text)]


def synonym_sets() -> List[Tuple[str, ...]]:
    """Every phrase family the mock paraphraser can rewrite."""
    sets: List[Tuple[str, ...]] = [c.forms for c in CONCEPTS]
    for frames in FRAMES.values():
        sets.extend(frames)
    sets.extend(GENERAL_SYNONYMS)
    return sets


def patient_entry(concept: Concept, dose: str = "") -> str:
    """Claims-style entry text; always strictly longer than the concept name."""
    if concept.category == "diagnosis":
        return f"ICD10 {concept.code} {concept.canonical}"
    if concept.category == "medication":
        return f"{concept.canonical} {dose or DOSES[0]} {concept.code}"
    return f"CPT {concept.code} {concept.canonical}"
