"""Category classifier over frozen INR embeddings.

A small MLP (1024 -> 256 -> classes) trained with softmax cross entropy.
Each training batch mixes same-class embedding pairs convexly (alpha drawn
uniform per sample), which regularizes the sparse desk-scale training sets.
"""

import numpy as np

from . import tensor as T
from .errors import InputError
from .nn import Linear
from .optim import Adam
from .rng import rng_stream
from .tensor import Tensor, no_grad


class EmbeddingClassifier:
    def __init__(self, classes, hidden_layer, out_layer):
        self.classes = list(classes)
        self.hidden = hidden_layer
        self.out = out_layer

    def logits(self, embeddings):
        h = T.relu(self.hidden(Tensor(np.asarray(embeddings, dtype=np.float32))))
        return self.out(h)

    def predict_batch(self, embeddings):
        embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float32))
        with no_grad():
            z = self.logits(embeddings).data
        return [self.classes[i] for i in z.argmax(axis=1)]

    def predict(self, embedding):
        return self.predict_batch(embedding)[0]

    def parameters(self):
        return self.hidden.parameters() + self.out.parameters()


def train_classifier(store, seed=0, epochs=300, lr=1e-3, mix=True):
    """Fit a classifier on the categories of an embedding store."""
    records = list(store)
    classes = sorted({r.category for r in records})
    if len(classes) < 2:
        raise InputError("classifier training needs at least 2 categories")
    by_class = {c: [r for r in records if r.category == c] for c in classes}
    embs = np.stack([r.embedding for r in records]).astype(np.float32)
    labels = np.array([classes.index(r.category) for r in records])

    rng = rng_stream(seed, "classifier")
    clf = EmbeddingClassifier(
        classes,
        Linear.init(embs.shape[1], 256, rng),
        Linear.init(256, len(classes), rng),
    )
    opt = Adam(clf.parameters(), lr=lr)
    onehot = np.eye(len(classes), dtype=np.float32)[labels]

    for _ in range(epochs):
        if mix:
            partner = np.array(
                [
                    records.index(by_class[r.category][rng.integers(len(by_class[r.category]))])
                    for r in records
                ]
            )
            alpha = rng.uniform(0.0, 1.0, size=(len(records), 1)).astype(np.float32)
            batch = alpha * embs + (1.0 - alpha) * embs[partner]
        else:
            batch = embs
        loss = T.softmax_cross_entropy(clf.logits(batch), Tensor(onehot))
        opt.zero_grad()
        loss.backward()
        opt.step()
    return clf
