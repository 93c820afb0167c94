"""
Module des services métier de Poinçon.

training_service et evaluation_service dépendent de app.models:
ils s'importent directement.
"""

from .gaf_service import GafService, gaf_service
from .material_service import generate_dataset, read_csv, write_csv

__all__ = ["GafService", "gaf_service", "generate_dataset", "read_csv", "write_csv"]
