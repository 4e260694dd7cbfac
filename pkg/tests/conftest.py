"""Shared fixtures: a small separable corpus, tiny-network
hyperparameters and a three-category customer-support knowledge base."""

from pathlib import Path

import pytest

from convqa import (
    Domain,
    HyperParams,
    default_domain_hyperparams,
    prepare_corpus,
    separable_corpus,
)

FIXTURES = Path(__file__).parent / "fixtures"

# Three clearly separated categories; every sentence has at least three
# tokens so sentence splitting keeps them all.
SUPPORT_DOCS = [
    ("The invoice shows a duplicate charge this month. Refunds post back to "
     "the original payment card. Billing statements arrive by email every "
     "month.", "billing"),
    ("Late payment fees appear when autopay fails. You can update the "
     "payment card from account settings.", "billing"),
    ("Packages ship from the warehouse within two days. Tracking numbers "
     "arrive by email after dispatch.", "delivery"),
    ("Couriers attempt delivery three times before returning parcels. "
     "Expedited shipping upgrades are available at checkout.", "delivery"),
    ("Damaged items qualify for a free replacement. Product defects should "
     "be reported with photos.", "quality"),
    ("Replacement units include a fresh warranty period. Inspections cover "
     "every returned unit.", "quality"),
]


def tiny_hyperparams(**overrides) -> HyperParams:
    """A network small enough for exhaustive numeric checks."""
    base = dict(
        epochs=1,
        batch_size=4,
        num_filters=2,
        widths=(2, 3),
        embedding_dim=5,
        l2_lambda=0.0,
        eval_every=1000,
        dropout=0.0,
        learning_rate=0.01,
        seed=0,
    )
    base.update(overrides)
    return HyperParams(**base)


def build_trained_domain(domain_id: str = "support", docs=None,
                         target_steps: int | None = 150) -> Domain:
    """A domain ingested from SUPPORT_DOCS and trained with a short
    schedule (the default schedule is longer than these tests need)."""
    domain = Domain(domain_id)
    domain.ingest_documents(docs or SUPPORT_DOCS)
    hp = None
    if target_steps is not None:
        base = default_domain_hyperparams(domain.snapshot.kb.size())
        per_epoch = -(-domain.snapshot.kb.size() // base.batch_size)
        hp = HyperParams(**{
            **{f: getattr(base, f) for f in (
                "batch_size", "num_filters", "widths", "embedding_dim",
                "l2_lambda", "eval_every", "dropout", "learning_rate", "seed",
            )},
            "epochs": max(1, -(-target_steps // per_epoch)),
        })
    domain.train(hp)
    return domain


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def support_docs():
    return list(SUPPORT_DOCS)


@pytest.fixture(scope="session")
def separable_pairs():
    return separable_corpus(n=90, seed=0)


@pytest.fixture(scope="session")
def toy_corpus(separable_pairs):
    """PreparedCorpus over the separable toy data: 72/9/9 split."""
    return prepare_corpus(separable_pairs, seed=0)


@pytest.fixture(scope="session")
def trained_support_domain():
    """Session-wide read-only trained domain; tests that mutate state
    must build their own with build_trained_domain()."""
    return build_trained_domain()
