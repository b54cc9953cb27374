from .base import Base, DatabaseSetup, default_database_url, init_database

__all__ = ['Base', 'DatabaseSetup', 'default_database_url', 'init_database']
