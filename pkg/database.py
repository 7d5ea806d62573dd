from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Union

from services.install_db import InstallDatabase


# Session for mutating a prefix: initialized database with the lock held
@contextmanager
def get_db(prefix: Union[str, Path]) -> Iterator[InstallDatabase]:
    db = InstallDatabase.init(prefix)
    with db.locked():
        yield db
