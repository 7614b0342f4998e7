import pytest

from cedsel.corpus import Example, Pool
from cedsel.synthetic import make_domain_pool


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.get_closest_marker("acceptance"):
        verdict = "PASS" if report.passed else "FAIL"
        print(f"\n[ACCEPTANCE] {item.name}: {verdict}")


def example(
    id="e0",
    dataset="ds0",
    task="binary",
    question="is it raining ?",
    answer="yes",
    background="",
    choices=(),
    split="candidate",
) -> Example:
    return Example(
        id=id,
        dataset=dataset,
        task=task,
        question=question,
        answer=answer,
        background=background,
        choices=tuple(choices),
        split=split,
    )


@pytest.fixture(scope="session")
def domain_pool() -> Pool:
    """Small 4-domain pool with disjoint content vocabularies."""
    return make_domain_pool(
        n_domains=4,
        candidates_per_domain=8,
        tests_per_domain=10,
        dev_per_domain=2,
        seed=3,
    )


@pytest.fixture(scope="session")
def tiny_pool() -> Pool:
    """Two tiny datasets, enough to train a base model quickly."""
    rows = []
    words = {"alpha": ["sun", "moon", "star", "sky"], "beta": ["fish", "reef", "wave", "tide"]}
    for ds, vocab in words.items():
        for i in range(4):
            rows.append(
                example(
                    id=f"{ds}-c{i}",
                    dataset=ds,
                    background=f"{vocab[i % 4]} {vocab[(i + 1) % 4]} {vocab[(i + 2) % 4]}",
                    question=f"{vocab[i % 4]} {vocab[(i + 3) % 4]} ?",
                    answer="yes" if ds == "alpha" else "no",
                )
            )
        rows.append(
            example(
                id=f"{ds}-dev0",
                dataset=ds,
                split="dev",
                background=f"{vocab[0]} {vocab[2]}",
                question=f"{vocab[1]} ?",
                answer="yes" if ds == "alpha" else "no",
            )
        )
        for i in range(2):
            rows.append(
                example(
                    id=f"{ds}-t{i}",
                    dataset=ds,
                    split="test",
                    background=f"{vocab[(i + 1) % 4]} {vocab[(i + 2) % 4]}",
                    question=f"{vocab[i % 4]} ?",
                    answer="yes" if ds == "alpha" else "no",
                )
            )
    return Pool(tuple(rows))
