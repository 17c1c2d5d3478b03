"""The four INR architectures and their forward evaluation.

An ``InrModel`` bundles an implicit-function tag, an MLP and (except for the
pure-MLP architecture) a feature grid. Evaluation is pure: same model, same
coordinates, bit-identical outputs.
"""

import numpy as np

from . import tensor as T
from .corpus import ARCH_TAGS, FN_TAGS, check_domain
from .errors import ConfigError, TagError
from .grids import HashGrid, OctreeGrid, TriplaneGrid
from .nn import Linear
from .tensor import Tensor, no_grad

SIREN_HIDDEN = 512
SIREN_LAYERS = 4
GRIDMLP_HIDDEN = 128
DEFAULT_OMEGA0 = 30.0


class SirenMlp:
    """Sine-activated MLP: 3 -> 512x4 -> 1, frequency factor on the first layer."""

    def __init__(self, layers, omega0=DEFAULT_OMEGA0):
        self.layers = layers
        self.omega0 = float(omega0)

    @classmethod
    def init(cls, rng, hidden=SIREN_HIDDEN, depth=SIREN_LAYERS, omega0=DEFAULT_OMEGA0):
        dims = [3] + [hidden] * depth + [1]
        layers = []
        for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
            if i == 0:
                bound = 1.0 / n_in
            else:
                bound = np.sqrt(6.0 / n_in)
            layers.append(Linear.init(n_in, n_out, rng, scale=bound))
        return cls(layers, omega0)

    def forward(self, x):
        h = T.sin(T.mul(self.layers[0](x), np.float32(self.omega0)))
        for layer in self.layers[1:-1]:
            h = T.sin(layer(h))
        return self.layers[-1](h)

    def layer_dims(self):
        return [(l.weight.data.shape[0], l.weight.data.shape[1]) for l in self.layers]

    def parameters(self):
        return [p for l in self.layers for p in l.parameters()]


class GridMlp:
    """Small ReLU MLP decoding (grid feature ++ coordinate) to a scalar."""

    def __init__(self, layers):
        self.layers = layers

    @classmethod
    def init(cls, n_in, rng, hidden=GRIDMLP_HIDDEN):
        return cls([Linear.init(n_in, hidden, rng), Linear.init(hidden, 1, rng)])

    def forward(self, x):
        h = x
        for layer in self.layers[:-1]:
            h = T.relu(layer(h))
        return self.layers[-1](h)

    def layer_dims(self):
        return [(l.weight.data.shape[0], l.weight.data.shape[1]) for l in self.layers]

    def parameters(self):
        return [p for l in self.layers for p in l.parameters()]


class InrModel:
    """One trained INR: architecture tag, MLP, optional grid, function tag."""

    def __init__(self, arch, fn, mlp, grid=None):
        if arch not in ARCH_TAGS:
            raise TagError(f"unknown architecture tag {arch!r}")
        if fn not in FN_TAGS:
            raise TagError(f"unknown implicit-function tag {fn!r}")
        if (arch == "mlp") != (grid is None):
            raise ConfigError("mlp-tagged models carry no grid; grid models need one")
        self.arch = arch
        self.fn = fn
        self.mlp = mlp
        self.grid = grid

    def forward_tensor(self, coords):
        """Differentiable forward pass; coords is a (B,3) numpy array."""
        coords = np.ascontiguousarray(coords, dtype=np.float32)
        check_domain(coords)
        xs = Tensor(coords)
        if self.grid is None:
            out = self.mlp.forward(xs)
        else:
            z = self.grid.interp(coords)
            out = self.mlp.forward(T.concat([z, xs], axis=1))
        return T.reshape(out, (-1,))

    def evaluate(self, coords):
        """Pure evaluation: (B,3) -> (B,) float32, no tape recording."""
        with no_grad():
            return self.forward_tensor(coords).data

    def parameters(self):
        params = list(self.mlp.parameters())
        if self.grid is not None:
            params += self.grid.parameters()
        return params


def build_grid(arch, rng, field=None, std=0.01, hash_table_size=2**19, triplane_res=64):
    """Fresh feature grid for an architecture; octree allocation needs the
    oracle (or any scalar field) to find surface voxels."""
    if arch == "hash":
        g = HashGrid(table_size=hash_table_size)
        g.init_features(rng, std)
        return g
    if arch == "triplane":
        g = TriplaneGrid(resolution=triplane_res)
        g.init_features(rng, std)
        return g
    if arch == "octree":
        if field is None:
            raise ConfigError("octree allocation requires a distance field")
        return OctreeGrid.build(field, rng, std=std)
    raise TagError(f"no grid for architecture {arch!r}")


def fresh_model(arch, fn, rng, field=None, mlp_template=None):
    """InrModel with a new grid and either the given MLP template weights or
    freshly initialized ones."""
    if arch == "mlp":
        mlp = mlp_template if mlp_template is not None else SirenMlp.init(rng)
        return InrModel(arch, fn, mlp)
    grid = build_grid(arch, rng, field=field)
    n_in = grid.feature_width + 3
    mlp = mlp_template if mlp_template is not None else GridMlp.init(n_in, rng)
    return InrModel(arch, fn, mlp, grid)


def inr_eval(model, coords):
    """Evaluate an InrModel at coords inside the domain."""
    return model.evaluate(coords)
