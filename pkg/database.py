from flask_sqlalchemy import SQLAlchemy

# rows are handed back to the CLI after commit
db = SQLAlchemy(session_options={"expire_on_commit": False})
