"""Reference student trainer behind the subprocess contract.

Reads an exported train/dev/test triple plus its task card, fine-tunes a
small model on CPU, selects the checkpoint with the best validation loss,
and writes {out}/metrics.json in the pipeline's metrics schema.
"""

__version__ = "0.1.0"
