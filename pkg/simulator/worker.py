from celery import Celery

from simulator.config import (
    RABBITMQ_HOST,
    RABBITMQ_PORT,
    REDIS_URL,
    TASK_QUEUE,
    WORKER_ACCOUNT,
    WORKER_PASSWORD,
)

# celery -A simulator.worker worker -Q chord_lab
app = Celery(
    "chord_lab",
    # 三個演化方法的 task 與 chord callback 所在的模組
    include=[
        "simulator.tasks_methods",
        "simulator.workflow",
    ],
    broker=f"pyamqp://{WORKER_ACCOUNT}:{WORKER_PASSWORD}@{RABBITMQ_HOST}:{RABBITMQ_PORT}/",
    # summarize_run_task 要等所有方法的結果，chord 需要 result backend
    backend=REDIS_URL,
)

app.conf.update(
    task_serializer="json",
    accept_content=["json"],
    result_serializer="json",
    task_default_queue=TASK_QUEUE,
    # 單一方法可能跑好幾分鐘（oracle / 大網格），一次只預取一個
    worker_prefetch_multiplier=1,
    task_acks_late=True,
    timezone="Asia/Taipei",
    enable_utc=True,
)
