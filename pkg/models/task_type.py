from enum import Enum


class TaskType(Enum):
    REACH = "reach"
    PUSH = "push"


class SegmentClass(Enum):
    TABLE = 0
    TARGET = 1
    DISTRACTOR = 2
    AGENT = 3
    GOAL = 4
