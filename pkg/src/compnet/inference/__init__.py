"""Network inference: neighborhood selection, graphical lasso, StARS, Pearson baseline."""
