import numpy as np

class CurveGraph:
    """
    Create ROC or precision-recall graphs comparing several methods.
    """
    def __init__(self, kind="roc"):
        """
        Parameters
        ----------
        kind : string
            One of "roc" or "pr"
        """
        if kind not in ("roc", "pr"):
            raise ValueError("kind must be 'roc' or 'pr'")
        self.kind = kind
        self.curves = []
        self.labels = []

    def add_curves(self, curves, label):
        """
        Add a method for comparison

        Parameters
        ----------
        curves : Curves
            Threshold sweep of the method

        label : string
            Label for method
        """
        self.curves.append(curves)
        self.labels.append(label)

    def __call__(self, fig, ax):
        """
        Create graph.

        Parameters
        ----------
        fig : matplotlib.figure.Figure
            Figure in which to create graph

        ax : matplotlib.axes.Axes
            Axes in which to create graph
        """
        for curves, label in zip(self.curves, self.labels):
            if self.kind == "roc":
                ax.plot(curves.fpr, curves.tpr, label="{} (AUC {:.4f})".format(label, curves.auc))
            else:
                # recall decreases along the thresholds
                order = np.argsort(curves.recall, kind="stable")
                ax.plot(np.asarray(curves.recall)[order], np.asarray(curves.precision)[order],
                        label=label)

        if self.kind == "roc":
            ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=0.8)
            ax.set_xlabel("False Positive Rate")
            ax.set_ylabel("True Positive Rate")
        else:
            ax.set_xlabel("Recall")
            ax.set_ylabel("Precision")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.legend(loc="lower right" if self.kind == "roc" else "lower left")
