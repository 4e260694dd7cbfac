"""Deterministic synthetic corpora.

Two generators: a small, cleanly separable toy set for fast learning
tests, and a complaints-like corpus over the same eleven product
categories the evaluation fixtures use, for end-to-end runs when the
real consumer-complaints CSV is not available. Both are pure functions
of their seed.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

TOY_CATEGORIES = ("billing", "delivery", "quality")

_TOY_KEYWORDS = {
    "billing": ["invoice", "charged", "refund", "payment", "overcharge", "fee"],
    "delivery": ["shipping", "courier", "package", "tracking", "delayed", "address"],
    "quality": ["broken", "defective", "scratched", "faulty", "cracked", "damaged"],
}

_TOY_FILLERS = [
    "the", "my", "order", "was", "and", "still", "after", "support",
    "told", "me", "nothing", "happened", "again", "last", "week",
]


def separable_corpus(n: int = 90, seed: int = 0) -> list[tuple[str, str]]:
    """(text, category) pairs where every text contains two or three
    keywords unique to its category, so a small model can reach full
    training accuracy."""
    rng = np.random.default_rng(seed)
    out: list[tuple[str, str]] = []
    cats = list(TOY_CATEGORIES)
    for i in range(n):
        cat = cats[i % len(cats)]
        kws = list(rng.choice(_TOY_KEYWORDS[cat], size=int(rng.integers(2, 4)),
                              replace=False))
        fillers = list(rng.choice(_TOY_FILLERS, size=int(rng.integers(4, 8))))
        words = kws + fillers
        rng.shuffle(words)
        out.append((" ".join(words), cat))
    return out


COMPLAINT_CATEGORIES = (
    "Customer Loan",
    "Bank account or service",
    "Credit card",
    "Credit reporting",
    "Debt collection",
    "Money transfers",
    "Mortgage",
    "Payday loan",
    "Prepaid card",
    "Virtual currency",
    "Student loan",
)

# Rough long-tailed mix: collection and mortgage complaints dominate,
# virtual currency and payday loans are rare.
_COMPLAINT_WEIGHTS = (
    0.080, 0.065, 0.110, 0.160, 0.250, 0.020,
    0.190, 0.015, 0.025, 0.015, 0.070,
)

_COMPLAINT_KEYWORDS = {
    "Customer Loan": [
        "auto loan", "installment loan", "vehicle financing", "title loan",
        "personal loan", "loan payoff", "repossession", "dealer financing",
    ],
    "Bank account or service": [
        "checking account", "savings account", "overdraft fee", "branch teller",
        "direct deposit", "atm withdrawal", "account closure", "wire hold",
    ],
    "Credit card": [
        "credit card", "billing statement", "late fee", "interest rate",
        "rewards points", "card balance", "minimum payment", "chargeback",
    ],
    "Credit reporting": [
        "credit report", "credit bureau", "credit score", "inaccurate item",
        "dispute investigation", "identity theft", "hard inquiry", "tradeline",
    ],
    "Debt collection": [
        "debt collector", "collection agency", "collection calls", "validation notice",
        "harassing calls", "old debt", "garnishment threat", "collection letter",
    ],
    "Money transfers": [
        "money transfer", "remittance", "transfer fee", "recipient abroad",
        "failed transfer", "exchange rate", "transfer cancelled", "pickup location",
    ],
    "Mortgage": [
        "mortgage servicer", "escrow account", "loan modification", "foreclosure notice",
        "refinance application", "monthly mortgage", "appraisal", "property taxes",
    ],
    "Payday loan": [
        "payday loan", "payday lender", "rollover fee", "storefront lender",
        "triple digit interest", "post dated check", "loan renewal", "paycheck advance",
    ],
    "Prepaid card": [
        "prepaid card", "reload pack", "card activation", "prepaid balance",
        "gift card", "monthly maintenance fee", "card registration", "frozen funds",
    ],
    "Virtual currency": [
        "virtual currency", "bitcoin exchange", "crypto wallet", "digital coins",
        "exchange withdrawal", "blockchain transfer", "coin custodian", "token sale",
    ],
    "Student loan": [
        "student loan", "loan servicer transfer", "income driven repayment", "deferment",
        "forbearance", "tuition financing", "graduate loans", "cosigner release",
    ],
}

_COMPLAINT_FILLERS = [
    "i contacted the company and", "nobody ever responded to", "they refused to fix",
    "i was charged for", "the rep promised that", "after many phone calls",
    "i sent a certified letter about", "this has damaged my finances and",
    "they keep reporting the", "i asked them to verify", "the account shows",
    "for several months now", "despite my complaint the", "i never authorized the",
    "please investigate the", "the balance is wrong on",
]


def complaints_like_corpus(n: int = 20_000, seed: int = 7,
                           confusion_rate: float = 0.12) -> list[tuple[str, str]]:
    """Imbalanced eleven-class complaint narratives.

    Each narrative mixes two to four of its category's phrases with
    generic complaint filler; a small fraction also borrow one phrase
    from another category so classes overlap instead of being
    trivially separable.
    """
    rng = np.random.default_rng(seed)
    cats = np.asarray(COMPLAINT_CATEGORIES)
    weights = np.asarray(_COMPLAINT_WEIGHTS)
    weights = weights / weights.sum()
    picks = rng.choice(len(cats), size=n, p=weights)
    out: list[tuple[str, str]] = []
    for k in picks:
        cat = str(cats[k])
        phrases = list(rng.choice(_COMPLAINT_KEYWORDS[cat],
                                  size=int(rng.integers(2, 5)), replace=False))
        if rng.random() < confusion_rate:
            other = str(cats[int(rng.integers(0, len(cats)))])
            phrases.append(str(rng.choice(_COMPLAINT_KEYWORDS[other])))
        fillers = list(rng.choice(_COMPLAINT_FILLERS,
                                  size=int(rng.integers(2, 5)), replace=False))
        parts = phrases + fillers
        rng.shuffle(parts)
        out.append((" ".join(parts) + ".", cat))
    return out


def write_complaints_csv(path: str | Path, n: int = 20_000, seed: int = 7) -> Path:
    """Write a complaints-like corpus using the real dataset's column
    names, so the same loading path handles both."""
    path = Path(path)
    rows = complaints_like_corpus(n=n, seed=seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Date received", "Product", "Consumer complaint narrative", "Company"])
        for i, (text, cat) in enumerate(rows):
            writer.writerow([f"2016-{(i % 12) + 1:02d}-01", cat, text, "ACME FINANCIAL"])
    return path
