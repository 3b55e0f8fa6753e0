# Generated by Django 5.2.9 on 2026-10-18 09:00

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=200, verbose_name='実験名')),
                ('config', models.JSONField(verbose_name='設定')),
                ('config_digest', models.CharField(db_index=True, max_length=64, verbose_name='設定ダイジェスト')),
                ('mode', models.CharField(max_length=20, verbose_name='モード')),
                ('status_code', models.PositiveSmallIntegerField(verbose_name='終了コード')),
                ('reason', models.CharField(max_length=50, verbose_name='理由')),
                ('verdicts', models.JSONField(default=dict, verbose_name='判定')),
                ('output_dir', models.CharField(blank=True, max_length=500, verbose_name='出力先')),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='作成日時')),
            ],
            options={
                'verbose_name': 'ExperimentRun',
                'verbose_name_plural': 'ExperimentRuns',
                'ordering': ['-created_at', '-id'],
            },
        ),
    ]
