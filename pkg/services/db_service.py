"""
Database service for stored grid points
"""

from typing import Generic, Type, TypeVar
import logging

from sqlalchemy.orm import Session

logger = logging.getLogger(__name__)

# Generic type variable
ModelType = TypeVar("ModelType")


class CRUDService(Generic[ModelType]):
    """
    Generic persistence operations service
    """
    def __init__(self, model: Type[ModelType]):
        self.model = model

    def update(self, db: Session, *, model_obj: ModelType) -> ModelType:
        """
        Insert or replace a record

        Args:
            db: Database session
            model_obj: Model instance with updated values

        Returns:
            ModelType: The merged record
        """
        try:
            merged = db.merge(model_obj)
            db.commit()
            return merged
        except Exception as e:
            db.rollback()
            logger.error(f"Failed to update record: {str(e)}")
            raise


class CRUDServiceGridPoint(CRUDService['GridPoint']):
    """
    CRUD operations for stored grid points
    """
    def completed_hashes(self, db: Session, grid_id: str) -> set[str]:
        """
        Hashes of the points of a grid that finished successfully

        Args:
            db: Database session
            grid_id: Hash identifying the grid

        Returns:
            set[str]: Parameter hashes with status 'ok'
        """
        rows = db.query(GridPoint.param_hash).filter(
            GridPoint.grid_id == grid_id, GridPoint.status == "ok"
        ).all()
        return {row[0] for row in rows}

    def list_ordered(self, db: Session, grid_id: str) -> list['GridPoint']:
        """All points of a grid in parameter order"""
        return db.query(GridPoint).filter(GridPoint.grid_id == grid_id).order_by(GridPoint.position).all()


# Import models after CRUDService definition to avoid circular imports
from experiments.models import GridPoint

# Create CRUD service instance
grid_point_crud = CRUDServiceGridPoint(GridPoint)

__all__ = ['CRUDService', 'grid_point_crud']
