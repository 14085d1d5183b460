import pytest

from curvens.corpus import Dataset, TextSample
from curvens.lm import train_ngram


def make_dataset(*texts, label="human", name="test"):
    samples = tuple(
        TextSample(id=f"t{i}", text=text, label=label) for i, text in enumerate(texts)
    )
    return Dataset(samples=samples, name=name)


@pytest.fixture(scope="session")
def tiny_filler():
    corpus = make_dataset(
        "the cat sat on the mat and looked at the dog",
        "the dog ran over the hill and the cat slept",
        "a bird flew over the mat while the dog sat still",
    )
    return train_ngram(corpus, order=2, k=0.5, name="tiny-filler")
