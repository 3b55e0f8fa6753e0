#!/usr/bin/env python
"""
heatkernels の CLI 入口。

    python manage.py gen | analyze | certify | report ...
    python manage.py migrate   # 実行履歴（ExperimentRun）のテーブル作成
"""
import os
import sys


def main():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Django を import できません。`python -m pip install -r requirements.txt` を実行したか、"
            "仮想環境が有効になっているか確認してください。"
        ) from exc
    # 終了コード（certify の 10〜15 など）は CommandError.returncode がそのまま使われる
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
