from sqlmodel import Session, SQLModel, create_engine

from .settings import DATABASE_URL

# check_same_thread is a sqlite-only option; FastAPI may hand a session to another thread
connect_args = {"check_same_thread": False} if DATABASE_URL.startswith("sqlite") else {}

engine = create_engine(DATABASE_URL, connect_args=connect_args)


def init_db() -> None:
    """Create the solve-run table on first start."""
    SQLModel.metadata.create_all(engine)


def get_session():
    with Session(engine) as session:
        yield session
