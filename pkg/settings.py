import os

from dotenv import load_dotenv

load_dotenv()

TUPLE_BUDGET = int(float(os.getenv("SALEM_TUPLE_BUDGET", "2e8")))
THREADS = int(os.getenv("SALEM_THREADS", "1"))
OUT_DIR = os.getenv("SALEM_OUT_DIR", "runs")
LOG_LEVEL = os.getenv("SALEM_LOG_LEVEL", "INFO")
DATABASE_URI = os.getenv("SQLALCHEMY_DATABASE_URI", "sqlite:///salem.db")

# Relation checks compare against margin + MARGIN_ATOL
MARGIN_ATOL = 1e-12
