import pytest

from keyweb.fixtures import load_fixture_graph, load_fixture_tasks
from keyweb.judge import StubJudge


@pytest.fixture(scope="session")
def graph():
    return load_fixture_graph()


@pytest.fixture(scope="session")
def tasks():
    return load_fixture_tasks()


@pytest.fixture(scope="session")
def tasks_by_id(tasks):
    return {task.task_id: task for task in tasks}


@pytest.fixture(scope="session")
def judge():
    return StubJudge()
