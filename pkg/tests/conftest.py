import os

# settings is imported during collection by most test modules
os.environ["SQLALCHEMY_DATABASE_URI"] = "sqlite:///:memory:"
os.environ.setdefault("SALEM_LOG_LEVEL", "WARNING")
