# Straight-line scalar reimplementation of the attention blocks, written with
# explicit loops and no autodiff, used as an independent oracle.

import math

import numpy as np

def conv(x, weight, bias, dilation=1):
    """
    Same-padded stride-1 cross-correlation, one output value at a time.
    """
    n, c, h, w = x.shape
    out_c, _, k, _ = weight.shape
    pad = dilation * (k - 1) // 2
    out = np.zeros((n, out_c, h, w))
    for b in range(n):
        for o in range(out_c):
            for i in range(h):
                for j in range(w):
                    total = bias.ravel()[o]
                    for ci in range(c):
                        for u in range(k):
                            y = i - pad + u * dilation
                            if y < 0 or y >= h:
                                continue
                            for v in range(k):
                                xx = j - pad + v * dilation
                                if 0 <= xx < w:
                                    total += weight[o, ci, u, v] * x[b, ci, y, xx]
                    out[b, o, i, j] = total
    return out

def relu(x):
    out = np.array(x, dtype=np.float64, copy=True)
    for idx in np.ndindex(out.shape):
        if out[idx] < 0:
            out[idx] = 0.0
    return out

def sigmoid(x):
    out = np.zeros(np.shape(x))
    for idx in np.ndindex(out.shape):
        out[idx] = 1.0 / (1.0 + math.exp(-x[idx]))
    return out

def _conv_params(params, name):
    return params[name + ".weight"], params[name + ".bias"]

def channel_attention(f5, fd, params, prefix):
    """
    Returns alpha (n, c), f_c_s and f_c_d.
    """
    n, c, h, w = f5.shape
    ws, bs = _conv_params(params, prefix + ".squeeze")
    we, be = _conv_params(params, prefix + ".excite")
    hidden_c = ws.shape[0]
    alpha = np.zeros((n, c))
    for b in range(n):
        pooled = [sum(f5[b, ch, i, j] + fd[b, ch, i, j] for i in range(h) for j in range(w))
                / (h * w) for ch in range(c)]
        hidden = []
        for k in range(hidden_c):
            v = bs.ravel()[k] + sum(ws[k, ch, 0, 0] * pooled[ch] for ch in range(c))
            hidden.append(max(v, 0.0))
        for ch in range(c):
            logit = be.ravel()[ch] + sum(we[ch, k, 0, 0] * hidden[k] for k in range(hidden_c))
            alpha[b, ch] = 1.0 / (1.0 + math.exp(-logit))
    f_c_s = np.zeros(f5.shape)
    f_c_d = np.zeros(fd.shape)
    for b, ch, i, j in np.ndindex(f5.shape):
        f_c_d[b, ch, i, j] = alpha[b, ch] * fd[b, ch, i, j]
        f_c_s[b, ch, i, j] = (1.0 - alpha[b, ch]) * f5[b, ch, i, j]
    return alpha, f_c_s, f_c_d

def spatial_attention(f3, fused, params, prefix):
    """
    Returns beta (n, h, w) and the block output.
    """
    s1 = conv(f3, *_conv_params(params, prefix + ".local_proj"))
    c_s1 = conv(fused, *_conv_params(params, prefix + ".fused_proj"))
    gate_w, gate_b = _conv_params(params, prefix + ".gate")
    n, c, h, w = s1.shape
    beta = np.zeros((n, h, w))
    for b, i, j in np.ndindex(n, h, w):
        logit = gate_b.ravel()[0]
        for ch in range(c):
            logit += gate_w[0, ch, 0, 0] * max(s1[b, ch, i, j] + c_s1[b, ch, i, j], 0.0)
        beta[b, i, j] = 1.0 / (1.0 + math.exp(-logit))
    calibrated = np.zeros((n, 2 * c, h, w))
    for b, ch, i, j in np.ndindex(n, c, h, w):
        calibrated[b, ch, i, j] = beta[b, i, j] * c_s1[b, ch, i, j]
        calibrated[b, c + ch, i, j] = (1.0 - beta[b, i, j]) * s1[b, ch, i, j]
    out = conv(calibrated, *_conv_params(params, prefix + ".out_proj"))
    return beta, out

def haam(x, params, prefix, dilation=3):
    """
    Full block: returns (output, alpha, beta).
    """
    f3 = relu(conv(x, *_conv_params(params, prefix + ".conv3")))
    f5 = relu(conv(x, *_conv_params(params, prefix + ".conv5")))
    fd = relu(conv(x, *_conv_params(params, prefix + ".convd"), dilation=dilation))
    alpha, f_c_s, f_c_d = channel_attention(f5, fd, params, prefix + ".channel")
    fused = np.concatenate([f_c_s, f_c_d], axis=1)
    beta, out = spatial_attention(f3, fused, params, prefix + ".spatial")
    return out, alpha, beta
