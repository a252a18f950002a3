from paneitzlab.operators.matrix import OperatorMatrix, spectrum
from paneitzlab.operators.paneitz import assemble_conformal_laplacian, assemble_paneitz

__all__ = ["OperatorMatrix", "assemble_conformal_laplacian", "assemble_paneitz", "spectrum"]
