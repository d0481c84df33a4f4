"""Straight-line float64 reference for the structural encoder on a tiny config.

Parameters and documents are defined by closed-form formulas so the Rust test
can rebuild the exact same inputs. Prints the frozen logits as JSON.
"""
import json
import math
import numpy as np

DIM, M, HEADS, LAYERS, HIDDEN = 16, 4, 2, 1, 8
DFF = 4 * DIM
EPS = 1e-5


def tensor_shapes():
    shapes = [("cls_embedding", (DIM,)), ("pos_embeddings", (M + 1, DIM))]
    for l in range(LAYERS):
        p = f"layers.{l}."
        shapes += [
            (p + "wq", (DIM, DIM)), (p + "bq", (DIM,)),
            (p + "wk", (DIM, DIM)), (p + "bk", (DIM,)),
            (p + "wv", (DIM, DIM)), (p + "bv", (DIM,)),
            (p + "wo", (DIM, DIM)), (p + "bo", (DIM,)),
            (p + "ln1_gain", (DIM,)), (p + "ln1_bias", (DIM,)),
            (p + "ffn_w1", (DIM, DFF)), (p + "ffn_b1", (DFF,)),
            (p + "ffn_w2", (DFF, DIM)), (p + "ffn_b2", (DIM,)),
            (p + "ln2_gain", (DIM,)), (p + "ln2_bias", (DIM,)),
        ]
    shapes += [
        ("classifier.w1", (DIM, HIDDEN)), ("classifier.b1", (HIDDEN,)),
        ("classifier.w2", (HIDDEN, 1)), ("classifier.b2", (1,)),
    ]
    return shapes


def make_params():
    params = {}
    for k, (name, shape) in enumerate(tensor_shapes()):
        n = int(np.prod(shape))
        i = np.arange(n, dtype=np.float64)
        v = 0.25 * np.sin(0.37 * (i + 1) + 1.3 * (k + 1))
        if name.endswith("_gain"):
            v = 1.0 + 0.4 * v
        params[name] = v.reshape(shape)
    return params


def make_doc(sent_count, phase):
    s = np.arange(sent_count, dtype=np.float64)[:, None]
    j = np.arange(DIM, dtype=np.float64)[None, :]
    return 0.5 * np.cos(0.41 * (s + 1) * (j + 1) + phase)


def pad(rows, sent_count):
    slots = np.zeros((M + 1, DIM))
    n = min(rows.shape[0], sent_count, M)
    slots[1:1 + n] = rows[:n]
    mask = np.array([True] + [i <= sent_count for i in range(1, M + 1)])
    return slots, mask


def gelu(x):
    return 0.5 * x * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))


def layer_norm(x, g, b):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + EPS) * g + b


def forward(P, slots, mask, fixed=None):
    x = slots.copy()
    x[0] = P["cls_embedding"]
    x = x + P["pos_embeddings"]
    dh = DIM // HEADS
    rel = []
    for l in range(LAYERS):
        p = f"layers.{l}."
        q = x @ P[p + "wq"] + P[p + "bq"]
        k = x @ P[p + "wk"] + P[p + "bk"]
        v = x @ P[p + "wv"] + P[p + "bv"]
        heads, layer_rel = [], []
        for h in range(HEADS):
            sl = slice(h * dh, (h + 1) * dh)
            if fixed is None:
                s = q[:, sl] @ k[:, sl].T / math.sqrt(dh)
                s[:, ~mask] = -np.inf
                s = s - s.max(axis=1, keepdims=True)
                a = np.exp(s)
                a = a / a.sum(axis=1, keepdims=True)
            else:
                a = fixed[l][h]
            layer_rel.append(a)
            heads.append(a @ v[:, sl])
        rel.append(layer_rel)
        attn = np.concatenate(heads, axis=1) @ P[p + "wo"] + P[p + "bo"]
        h1 = layer_norm(x + attn, P[p + "ln1_gain"], P[p + "ln1_bias"])
        f = gelu(h1 @ P[p + "ffn_w1"] + P[p + "ffn_b1"]) @ P[p + "ffn_w2"] + P[p + "ffn_b2"]
        x = layer_norm(h1 + f, P[p + "ln2_gain"], P[p + "ln2_bias"])
    z = gelu(x[0] @ P["classifier.w1"] + P["classifier.b1"])
    logit = float(z @ P["classifier.w2"][:, 0] + P["classifier.b2"][0])
    return logit, rel


if __name__ == "__main__":
    P = make_params()
    a_slots, a_mask = pad(make_doc(3, 0.2), 3)
    b_slots, _ = pad(make_doc(2, 1.1), 2)
    logit_a, rel_a = forward(P, a_slots, a_mask)
    _, b_mask = pad(make_doc(2, 1.1), 2)
    logit_b, _ = forward(P, b_slots, b_mask)
    # doc B's content laid out under doc A's mask (slot 3 zero but active)
    b_under_a, _ = pad(make_doc(2, 1.1), 3)
    logit_fixed, _ = forward(P, b_under_a, a_mask, fixed=rel_a)

    # two-sentence counterfactual triple
    x_slots, x_mask = pad(make_doc(2, 0.2), 2)
    z_slots, _ = pad(make_doc(2, 0.35), 2)
    xp_slots, _ = pad(make_doc(2, 2.0), 2)
    lf, rel_x = forward(P, x_slots, x_mask)
    lz, _ = forward(P, z_slots, x_mask)
    lx, _ = forward(P, xp_slots, x_mask, fixed=rel_x)

    print(json.dumps({
        "logit_a": repr(logit_a),
        "logit_b": repr(logit_b),
        "logit_fixed_rel_a_content_b": repr(logit_fixed),
        "relation_a_layer0_head0_row0": [repr(float(v)) for v in rel_a[0][0][0]],
        "effects": {"factual": repr(lf), "do_z": repr(lz), "do_x": repr(lx)},
    }, indent=2))
