"""
Database configuration for the grid result store
"""

from contextlib import contextmanager
import logging
import os

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

logger = logging.getLogger(__name__)

DEFAULT_DATABASE_FILE = "grid.db"

Base = declarative_base()


def default_database_url(output_dir: str) -> str:
    """DATABASE_URL if set, otherwise a SQLite file inside the output directory"""
    url = os.getenv("DATABASE_URL")
    if url:
        return url
    return f"sqlite:///{os.path.join(os.path.abspath(output_dir), DEFAULT_DATABASE_FILE)}"


class DatabaseSetup:
    def __init__(self, database_url: str):
        self.database_url = database_url
        self.engine = None
        self.SessionLocal = None

    def init_db(self):
        """Initialize the database engine and session factory."""
        try:
            if self.database_url.startswith("sqlite:///"):
                path = self.database_url[len("sqlite:///"):]
                if path and path != ":memory:":
                    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            self.engine = create_engine(self.database_url)
            self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)
            logger.info(f"Database initialized with URL: {self.database_url}")
        except Exception as e:
            logger.error(f"Failed to initialize database: {str(e)}")
            raise

    def create_tables(self):
        """Create all tables defined in the models."""
        # registers GridPoint on Base.metadata
        import experiments.models  # noqa: F401
        try:
            Base.metadata.create_all(bind=self.engine)
            logger.info("Database tables created successfully")
        except Exception as e:
            logger.error(f"Failed to create database tables: {str(e)}")
            raise

    @contextmanager
    def get_db(self):
        """Get a database session."""
        if not self.SessionLocal:
            raise RuntimeError("Database not initialized. Call init_db() first.")

        db = self.SessionLocal()
        try:
            yield db
        finally:
            db.close()

    def dispose(self):
        if self.engine is not None:
            self.engine.dispose()


def init_database(database_url: str) -> DatabaseSetup:
    """Initialize the database and create all tables."""
    setup = DatabaseSetup(database_url)
    try:
        setup.init_db()
        setup.create_tables()
        logger.info("Database initialization completed successfully")
    except Exception as e:
        logger.error(f"Database initialization failed: {str(e)}")
        raise
    return setup


__all__ = ['Base', 'DatabaseSetup', 'default_database_url', 'init_database']
