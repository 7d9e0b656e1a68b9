"""Straight-line re-implementation of the selection scorer.

Pure-Python loops, no vectorization: this is the independent oracle the
vectorized implementation is checked against.  It mirrors the mathematical
definition (same norm smoothing constant, same log(1+s) saturation).
"""

import math

NORM_EPS = 1e-12


def ck_reference_score(model, q_ids, p_ids, q_mask=None, p_mask=None):
    q_ids = [int(t) for t in q_ids]
    p_ids = [int(t) for t in p_ids]
    if q_mask is None:
        q_mask = [t != 0 for t in q_ids]
    if p_mask is None:
        p_mask = [t != 0 for t in p_ids]

    def embed(ids):
        return [[float(v) for v in model.embeddings[t]] for t in ids]

    def project(vectors):
        if model.pre_projection is None:
            return vectors
        proj = model.pre_projection
        d_in, d_out = proj.shape
        return [
            [sum(vec[i] * float(proj[i][j]) for i in range(d_in)) for j in range(d_out)]
            for vec in vectors
        ]

    def convolve(vectors):
        length = len(vectors)
        d_in = len(vectors[0])
        d_out = len(model.conv_bias)
        out = []
        for t in range(length):
            row = [float(b) for b in model.conv_bias]
            for tau in range(3):
                s = t + tau - 1
                if 0 <= s < length:
                    for i in range(d_in):
                        value = vectors[s][i]
                        for e in range(d_out):
                            row[e] += value * float(model.conv_kernel[tau][i][e])
            out.append(row)
        return out

    def normalize(vec):
        norm = math.sqrt(sum(a * a for a in vec) + NORM_EPS)
        return [a / norm for a in vec]

    q_ctx = [normalize(v) for v in convolve(project(embed(q_ids)))]
    p_ctx = [normalize(v) for v in convolve(project(embed(p_ids)))]

    mus = [float(m) for m in model.kernel_bank.mus]
    sigmas = [float(s) for s in model.kernel_bank.sigmas]
    score = float(model.w_k_bias[0])
    for k in range(len(mus)):
        feature = 0.0
        for i in range(len(q_ids)):
            if not q_mask[i]:
                continue
            kernel_sum = 0.0
            for j in range(len(p_ids)):
                if not p_mask[j]:
                    continue
                cos = sum(a * b for a, b in zip(q_ctx[i], p_ctx[j]))
                kernel_sum += math.exp(-((cos - mus[k]) ** 2) / (2.0 * sigmas[k] ** 2))
            feature += math.log1p(kernel_sum)
        score += feature * float(model.w_k[k])
    return score
