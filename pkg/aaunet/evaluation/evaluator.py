import logging

import numpy as np

from .metrics import evaluate_predictions

logger = logging.getLogger(__name__)

def predict_samples(model, samples, batch_size=8):
    """
    Run inference over samples in batches of equally sized images.

    Returns
    -------
    list of numpy arrays of shape (h, w)
    """
    probs = []
    start = 0
    while start < len(samples):
        shape = samples[start].image.shape
        stop = start
        while (stop < len(samples) and stop - start < batch_size
                and samples[stop].image.shape == shape):
            stop += 1
        x = np.concatenate([s.image.data for s in samples[start:stop]], axis=0)
        out = model.predict(x).data
        probs.extend(np.array(out[i, 0], dtype=np.float64) for i in range(out.shape[0]))
        start = stop
    return probs

def evaluate_model(model, samples, threshold=0.5, n_thresholds=101, with_curves=True,
        pooled=False, batch_size=8):
    """
    Predict every sample and score the predictions against the sample masks.

    Parameters
    ----------
    model : AAUNet

    samples : list of Sample
        Every sample must carry a mask.

    Returns
    -------
    MetricsReport
    """
    missing = [s.id for s in samples if s.mask is None]
    if missing:
        raise ValueError("Samples without masks cannot be evaluated: {}".format(missing[:5]))
    probs = predict_samples(model, samples, batch_size)
    gts = [s.mask.data[0, 0] for s in samples]
    return evaluate_predictions(probs, gts, ids=[s.id for s in samples],
            labels=[s.label for s in samples], threshold=threshold,
            n_thresholds=n_thresholds, pooled=pooled, with_curves=with_curves)

def mean_dice(model, samples, threshold=0.5, batch_size=8):
    """
    Mean per-image Dice (percent) of the model on `samples`.
    """
    report = evaluate_model(model, samples, threshold, with_curves=False,
            batch_size=batch_size)
    return report.mean("dice")
