class TrainingCurveGraph:
    """
    Graph training loss and, when available, validation Dice per epoch.
    """
    def __call__(self, ax, history):
        """
        Parameters
        ----------
        ax : matplotlib.axes.Axes
            Axes object on which to create graph

        history : list of EpochRecord
            Training log to plot
        """
        epochs = [r.epoch for r in history]
        ax.plot(epochs, [r.train_loss for r in history], label="Train Loss")
        ax.set_xlabel("Epoch")
        ax.set_ylabel("Loss")
        dice = [(r.epoch, r.val_dice) for r in history if r.val_dice is not None]
        if dice:
            ax2 = ax.twinx()
            ax2.plot([e for e, _ in dice], [d for _, d in dice], color="tab:orange",
                    label="Val. Dice")
            ax2.set_ylabel("Dice (%)")
            lines = ax.get_lines() + ax2.get_lines()
            ax.legend(lines, [line.get_label() for line in lines])
            return ax2
        ax.legend()
        return None
