"""Independent linear-domain reference implementations for the test suite.

Everything in this module recomputes model quantities from first principles:
plain Python floats, explicit probability products, and itertools enumeration.
It deliberately shares no code with the library's log-domain routines beyond
reading parameter arrays off the dataclasses, so agreement between the two
is evidence that both are right rather than that one copies the other.

Only intended for tiny models (a dozen or so total bits).
"""

import itertools
import math

MEAN_EPS = 1e-7


def stable_sigmoid(a):
    a = float(a)
    if a >= 0.0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


def clamp_mean(m):
    return min(max(m, MEAN_EPS), 1.0 - MEAN_EPS)


def bernoulli_product(means, bits):
    """prod_i mean_i^bit_i (1 - mean_i)^(1 - bit_i), clamped means."""
    total = 1.0
    for m, b in zip(means, bits):
        m = clamp_mean(m)
        total *= m if b else (1.0 - m)
    return total


def layer_means(layer, inputs):
    w = layer.weights
    b = layer.biases
    out = []
    for i in range(w.shape[0]):
        a = float(b[i])
        for j in range(w.shape[1]):
            a += float(w[i, j]) * float(inputs[j])
        out.append(stable_sigmoid(a))
    return out


def layer_probability(layer, inputs, targets):
    return bernoulli_product(layer_means(layer, inputs), targets)


def prior_probability(prior, bits):
    means = [stable_sigmoid(float(b)) for b in prior.biases]
    return bernoulli_product(means, bits)


def all_bit_tuples(n):
    """All n-bit tuples in lexicographic order, first position most significant."""
    return list(itertools.product((0, 1), repeat=n))


def latent_tuples(model):
    """All joint latent assignments, as one tuple of per-layer tuples each."""
    sizes = model.layer_sizes[1:]
    total = sum(sizes)
    configs = []
    for bits in itertools.product((0, 1), repeat=total):
        layers = []
        at = 0
        for s in sizes:
            layers.append(bits[at : at + s])
            at += s
        configs.append(tuple(layers))
    return configs


def p_joint(model, x, hs):
    """p(x, h) as a plain probability product over the top-down stack."""
    total = prior_probability(model.prior, hs[-1])
    for i, layer in enumerate(model.p_layers):
        target = x if i == 0 else hs[i - 1]
        total *= layer_probability(layer, hs[i], target)
    return total


def q_conditional(model, x, hs):
    """q(h | x) as a plain probability product over the bottom-up stack."""
    total = 1.0
    for i, layer in enumerate(model.q_layers):
        inputs = x if i == 0 else hs[i - 1]
        total *= layer_probability(layer, inputs, hs[i])
    return total


def ptilde(model, x):
    """(sum_h sqrt(p(x,h) q(h|x)))^2 by direct summation."""
    acc = 0.0
    for hs in latent_tuples(model):
        acc += math.sqrt(p_joint(model, x, hs) * q_conditional(model, x, hs))
    return acc * acc


def p_marginal(model, x):
    return sum(p_joint(model, x, hs) for hs in latent_tuples(model))


def z_squared(model):
    return sum(ptilde(model, x) for x in all_bit_tuples(model.visible_dim))


def pstar(model, x):
    return ptilde(model, x) / z_squared(model)


def _free_positions(model, clamped):
    sizes = model.layer_sizes
    if clamped is None:
        clamped = [None] * len(sizes)
    spec = []
    for i, entry in enumerate(clamped):
        if entry is None:
            spec.append([-1] * sizes[i])
        else:
            spec.append([int(v) for v in entry])
    free = [(i, j) for i, layer in enumerate(spec) for j, v in enumerate(layer) if v == -1]
    return spec, free


def conditional_pstar(model, clamped):
    """Exact conditional of the combined model over the free bits.

    ``clamped`` lists one entry per layer (visibles first): a vector with
    0/1 for fixed bits and -1 for free bits, or None for a fully free layer.
    Returns probabilities over the lexicographic enumeration of the free
    bits, scanned layer by layer with the visibles first.
    """
    spec, free = _free_positions(model, clamped)
    weights = []
    for bits in itertools.product((0, 1), repeat=len(free)):
        layers = [list(layer) for layer in spec]
        for (i, j), b in zip(free, bits):
            layers[i][j] = b
        x = tuple(max(v, 0) for v in layers[0])
        hs = [tuple(max(v, 0) for v in layer) for layer in layers[1:]]
        w = math.sqrt(ptilde(model, x)) * math.sqrt(
            p_joint(model, x, hs) * q_conditional(model, x, hs)
        )
        weights.append(w)
    total = sum(weights)
    return [w / total for w in weights]
